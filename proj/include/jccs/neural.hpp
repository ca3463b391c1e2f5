#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "jccs/common.hpp"
#include "jccs/rng.hpp"

namespace jccs::neural {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Role { quantile, loss };

struct Layer {
    Mat W;
    Vec b;
};

// Feed-forward ReLU network with an identity output head. Feature
// standardization is stored inside the model as an affine pre-map, so the
// encoded function seen by the MILP reformulation is exactly the function
// computed by forward().
struct MlpModel {
    Role role = Role::loss;
    std::vector<double> eps_list;  // quantile heads, one output per entry
    int input_dim = 0;
    std::vector<Layer> layers;  // hidden layers then output layer
    Vec feat_mean, feat_scale;
    Vec feat_lo, feat_hi;  // training feature box, kept for drift warnings

    int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().b.size()); }

    int hidden_neuron_count() const {
        int n = 0;
        for (size_t l = 0; l + 1 < layers.size(); ++l) n += static_cast<int>(layers[l].b.size());
        return n;
    }

    void validate() const {
        if (layers.empty()) throw std::invalid_argument("model has no layers");
        int prev = input_dim;
        for (const Layer& l : layers) {
            if (l.W.cols() != prev || l.W.rows() != l.b.size())
                throw std::invalid_argument("layer dimensions do not chain");
            if (!l.W.allFinite() || !l.b.allFinite())
                throw std::invalid_argument("model weights must be finite");
            prev = static_cast<int>(l.b.size());
        }
        if (role == Role::quantile && output_dim() != static_cast<int>(eps_list.size()))
            throw std::invalid_argument("quantile model output dim must equal the eps list size");
        if (role == Role::loss && output_dim() != 1)
            throw std::invalid_argument("loss model must have one output");
    }

    Vec standardize(const Vec& x) const {
        if (feat_mean.size() == 0) return x;
        return (x - feat_mean).cwiseQuotient(feat_scale);
    }

    // Layers with the standardization folded into the first affine map;
    // this is what bound propagation and the MILP encoding consume.
    std::vector<Layer> effective_layers() const {
        std::vector<Layer> out = layers;
        if (feat_mean.size() > 0 && !out.empty()) {
            Vec inv = feat_scale.cwiseInverse();
            out[0].b = out[0].b - out[0].W * feat_mean.cwiseQuotient(feat_scale);
            out[0].W = out[0].W * inv.asDiagonal();
        }
        return out;
    }

    Vec forward(const Vec& x) const {
        if (x.size() != input_dim) throw std::invalid_argument("input dimension mismatch");
        Vec s = standardize(x);
        for (size_t l = 0; l + 1 < layers.size(); ++l)
            s = (layers[l].W * s + layers[l].b).cwiseMax(0.0);
        Vec out = layers.back().W * s + layers.back().b;
        if (!out.allFinite()) throw InternalError("non-finite network output");
        return out;
    }
};

// Pinball loss at risk level eps; the indicator is inclusive at mu = 0.
inline double pinball_loss(double h, double q_hat, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("eps must lie in (0,1)");
    double mu = h - q_hat;
    return mu * (1.0 - eps - (mu <= 0.0 ? 1.0 : 0.0));
}

// The ceil((1-eps)N)-th order statistic: inf{y : P_N(h <= y) >= 1-eps}.
inline double empirical_quantile(std::vector<double> samples, double eps) {
    if (samples.empty()) throw std::invalid_argument("empirical_quantile needs samples");
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("eps must lie in (0,1)");
    size_t n = samples.size();
    size_t rank = static_cast<size_t>(std::ceil((1.0 - eps) * static_cast<double>(n)));
    rank = std::min(std::max<size_t>(rank, 1), n);
    std::nth_element(samples.begin(), samples.begin() + (rank - 1), samples.end());
    return samples[rank - 1];
}

struct TrainConfig {
    int epochs = 200;
    int batch = 256;
    double lr = 1e-3;
    double dropout = 0.1;
    std::uint64_t seed = 1;
    double val_fraction = 0.1;

    void validate() const {
        if (epochs <= 0 || batch <= 0 || lr <= 0.0)
            throw std::invalid_argument("epochs, batch and lr must be positive");
        if (!(dropout >= 0.0 && dropout < 1.0))
            throw std::invalid_argument("dropout must lie in [0,1)");
        if (!(val_fraction > 0.0 && val_fraction <= 0.5))
            throw std::invalid_argument("validation fraction must lie in (0, 0.5]");
    }
};

struct TrainReport {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;
    double best_val = 0.0;
};

namespace detail {

inline double head_loss(Role role, const std::vector<double>& eps_list, double y,
                        const Eigen::RowVectorXd& out) {
    if (role == Role::loss) {
        double d = y - out[0];
        return d * d;
    }
    double total = 0.0;
    for (size_t i = 0; i < eps_list.size(); ++i) total += pinball_loss(y, out[i], eps_list[i]);
    return total;
}

// d(loss)/d(out), one row per sample.
inline void head_grad(Role role, const std::vector<double>& eps_list, const Vec& y, const Mat& out,
                      Mat& grad) {
    grad.resize(out.rows(), out.cols());
    if (role == Role::loss) {
        grad.col(0) = 2.0 * (out.col(0) - y);
        return;
    }
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (size_t i = 0; i < eps_list.size(); ++i) {
            double mu = y[r] - out(r, static_cast<Eigen::Index>(i));
            grad(r, static_cast<Eigen::Index>(i)) =
                -(1.0 - eps_list[i] - (mu <= 0.0 ? 1.0 : 0.0));
        }
}

struct AdamState {
    std::vector<Layer> m, v;
    long t = 0;
    explicit AdamState(const std::vector<Layer>& shape) {
        for (const Layer& l : shape) {
            m.push_back({Mat::Zero(l.W.rows(), l.W.cols()), Vec::Zero(l.b.size())});
            v.push_back({Mat::Zero(l.W.rows(), l.W.cols()), Vec::Zero(l.b.size())});
        }
    }
    void step(std::vector<Layer>& params, const std::vector<Layer>& grads, double lr) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++t;
        double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (size_t l = 0; l < params.size(); ++l) {
            m[l].W = b1 * m[l].W + (1.0 - b1) * grads[l].W;
            v[l].W = b2 * v[l].W + (1.0 - b2) * grads[l].W.cwiseProduct(grads[l].W);
            params[l].W -=
                (lr * (m[l].W / c1).array() / ((v[l].W / c2).array().sqrt() + eps)).matrix();
            m[l].b = b1 * m[l].b + (1.0 - b1) * grads[l].b;
            v[l].b = b2 * v[l].b + (1.0 - b2) * grads[l].b.cwiseProduct(grads[l].b);
            params[l].b -=
                (lr * (m[l].b / c1).array() / ((v[l].b / c2).array().sqrt() + eps)).matrix();
        }
    }
};

// Mean loss over rows of Xs (already standardized), without dropout.
inline double eval_loss(const std::vector<Layer>& layers, Role role,
                        const std::vector<double>& eps_list, const Mat& Xs, const Vec& y,
                        const std::vector<long>& idx) {
    if (idx.empty()) return 0.0;
    double total = 0.0;
    const long block = 2048;
    for (size_t lo = 0; lo < idx.size(); lo += block) {
        long B = std::min<long>(block, static_cast<long>(idx.size() - lo));
        Mat S(B, Xs.cols());
        for (long r = 0; r < B; ++r) S.row(r) = Xs.row(idx[lo + r]);
        for (size_t l = 0; l + 1 < layers.size(); ++l)
            S = ((S * layers[l].W.transpose()).rowwise() + layers[l].b.transpose()).cwiseMax(0.0);
        Mat out = (S * layers.back().W.transpose()).rowwise() + layers.back().b.transpose();
        for (long r = 0; r < B; ++r) total += head_loss(role, eps_list, y[idx[lo + r]], out.row(r));
    }
    return total / static_cast<double>(idx.size());
}

}  // namespace detail

// Mini-batch Adam on the empirical role loss (summed pinball heads for the
// quantile role, squared error for the loss role). Returns the parameters
// with the best validation loss. The zero-hidden-width, zero-feature mode is
// the degenerate constant fit and uses the closed-form empirical minimizer
// (the empirical quantile / the sample mean).
inline MlpModel train(const Mat& X, const Vec& y, const std::vector<int>& arch, Role role,
                      const std::vector<double>& eps_list, const TrainConfig& cfg,
                      TrainReport* report = nullptr) {
    cfg.validate();
    long n = X.rows();
    if (n == 0 || y.size() != n) throw std::invalid_argument("training set is empty or mismatched");
    if (role == Role::quantile && eps_list.empty())
        throw std::invalid_argument("quantile training needs at least one eps");
    for (double e : eps_list)
        if (!(e > 0.0 && e < 1.0)) throw std::invalid_argument("eps must lie in (0,1)");
    int d = static_cast<int>(X.cols());
    int out_dim = role == Role::quantile ? static_cast<int>(eps_list.size()) : 1;

    MlpModel model;
    model.role = role;
    model.eps_list = eps_list;
    model.input_dim = d;

    // feature box and standardization
    model.feat_lo = d > 0 ? Vec(X.colwise().minCoeff()) : Vec();
    model.feat_hi = d > 0 ? Vec(X.colwise().maxCoeff()) : Vec();
    model.feat_mean = d > 0 ? Vec(X.colwise().mean()) : Vec();
    model.feat_scale = Vec::Ones(d);
    for (int c = 0; c < d; ++c) {
        double var = (X.col(c).array() - model.feat_mean[c]).square().sum() /
                     std::max<double>(1.0, static_cast<double>(n - 1));
        model.feat_scale[c] = std::sqrt(var) > 1e-12 ? std::sqrt(var) : 1.0;
    }

    if (arch.empty() && d == 0) {
        // constant predictor: closed-form empirical minimizer of the role loss
        std::vector<double> ys(y.data(), y.data() + n);
        Layer head{Mat::Zero(out_dim, 0), Vec::Zero(out_dim)};
        if (role == Role::loss) {
            head.b[0] = y.mean();
        } else {
            for (int i = 0; i < out_dim; ++i) head.b[i] = empirical_quantile(ys, eps_list[i]);
        }
        model.layers = {head};
        model.validate();
        if (report) {
            report->train_loss = {detail::eval_loss(model.layers, role, eps_list,
                                                    Mat::Zero(n, 0), y, [&] {
                                                        std::vector<long> idx(n);
                                                        std::iota(idx.begin(), idx.end(), 0);
                                                        return idx;
                                                    }())};
            report->val_loss = report->train_loss;
            report->best_epoch = 0;
            report->best_val = report->val_loss[0];
        }
        return model;
    }

    Mat Xs(n, d);
    for (long i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) Xs(i, c) = (X(i, c) - model.feat_mean[c]) / model.feat_scale[c];

    // He-uniform init
    rng::Philox init_gen(cfg.seed, 0);
    std::vector<int> widths = arch;
    widths.push_back(out_dim);
    int prev = d;
    for (int w : widths) {
        double limit = std::sqrt(6.0 / std::max(1, prev));
        Layer l{Mat(w, prev), Vec::Zero(w)};
        for (int r = 0; r < w; ++r)
            for (int c = 0; c < prev; ++c) l.W(r, c) = init_gen.uniform(-limit, limit);
        model.layers.push_back(std::move(l));
        prev = w;
    }
    model.validate();

    // deterministic validation split
    std::vector<long> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng::Philox split_gen(cfg.seed, 1);
    for (long i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[split_gen.uniform_index(static_cast<std::uint64_t>(i + 1))]);
    long n_val = n >= 2 ? std::max<long>(1, std::lround(cfg.val_fraction * static_cast<double>(n)))
                        : 0;
    n_val = std::min(n_val, n - 1);
    std::vector<long> val_idx(perm.end() - n_val, perm.end());
    std::vector<long> train_idx(perm.begin(), perm.end() - n_val);
    long n_train = static_cast<long>(train_idx.size());

    detail::AdamState adam(model.layers);
    std::vector<Layer> best = model.layers;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    size_t n_hidden_layers = model.layers.size() - 1;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng::Philox shuffle_gen(cfg.seed, 2 + static_cast<std::uint64_t>(epoch));
        for (long i = n_train - 1; i > 0; --i)
            std::swap(train_idx[i],
                      train_idx[shuffle_gen.uniform_index(static_cast<std::uint64_t>(i + 1))]);

        double epoch_loss = 0.0;
        long batches = (n_train + cfg.batch - 1) / cfg.batch;
        for (long bi = 0; bi < batches; ++bi) {
            long lo = bi * cfg.batch;
            long hi = std::min(n_train, lo + cfg.batch);
            long B = hi - lo;
            Mat Xb(B, d);
            Vec yb(B);
            for (long r = 0; r < B; ++r) {
                Xb.row(r) = Xs.row(train_idx[lo + r]);
                yb[r] = y[train_idx[lo + r]];
            }
            // forward with inverted dropout on hidden activations
            rng::Philox drop_gen(cfg.seed,
                                 (static_cast<std::uint64_t>(epoch) << 24) ^
                                     (static_cast<std::uint64_t>(bi) + 1000000));
            std::vector<Mat> acts(n_hidden_layers + 1);
            std::vector<Mat> zs(n_hidden_layers);
            std::vector<Mat> masks(n_hidden_layers);  // inverted-dropout multipliers
            acts[0] = Xb;
            for (size_t l = 0; l < n_hidden_layers; ++l) {
                zs[l] = (acts[l] * model.layers[l].W.transpose()).rowwise() +
                        model.layers[l].b.transpose();
                Mat a = zs[l].cwiseMax(0.0);
                if (cfg.dropout > 0.0) {
                    double keep = 1.0 - cfg.dropout;
                    masks[l].resize(a.rows(), a.cols());
                    for (Eigen::Index r = 0; r < a.rows(); ++r)
                        for (Eigen::Index c = 0; c < a.cols(); ++c)
                            masks[l](r, c) = drop_gen.next_double() < keep ? 1.0 / keep : 0.0;
                    a = a.cwiseProduct(masks[l]);
                }
                acts[l + 1] = a;
            }
            Mat out = (acts[n_hidden_layers] * model.layers.back().W.transpose()).rowwise() +
                      model.layers.back().b.transpose();

            double batch_loss = 0.0;
            for (long r = 0; r < B; ++r)
                batch_loss += detail::head_loss(role, eps_list, yb[r], out.row(r));
            batch_loss /= static_cast<double>(B);
            if (!std::isfinite(batch_loss))
                throw TrainingError("training aborted: non-finite loss at epoch " +
                                    std::to_string(epoch) + ", batch " + std::to_string(bi));
            epoch_loss += batch_loss * static_cast<double>(B);

            Mat dout;
            detail::head_grad(role, eps_list, yb, out, dout);
            dout /= static_cast<double>(B);

            std::vector<Layer> grads(model.layers.size());
            Mat delta = dout;
            for (size_t l = model.layers.size(); l-- > 0;) {
                grads[l].W = delta.transpose() * acts[l];
                grads[l].b = delta.colwise().sum().transpose();
                if (l > 0) {
                    delta = delta * model.layers[l].W;
                    delta = delta.cwiseProduct(
                        (zs[l - 1].array() > 0.0).cast<double>().matrix());
                    if (cfg.dropout > 0.0) delta = delta.cwiseProduct(masks[l - 1]);
                }
            }
            adam.step(model.layers, grads, cfg.lr);
        }

        double val = detail::eval_loss(model.layers, role, eps_list, Xs, y, val_idx);
        if (report) {
            report->train_loss.push_back(epoch_loss / static_cast<double>(n_train));
            report->val_loss.push_back(val);
        }
        if (n_val == 0) val = epoch_loss / static_cast<double>(n_train);
        if (val < best_val) {
            best_val = val;
            best = model.layers;
            best_epoch = epoch;
        }
    }

    model.layers = best;
    if (report) {
        report->best_epoch = best_epoch;
        report->best_val = best_val;
    }
    return model;
}

// Analytic gradient vs central finite differences (step 1e-5) of the role
// loss at one sample. Returns max |a - n| / max(1, |a| + |n|).
inline double gradient_check(const MlpModel& model_in, const Vec& x, double h) {
    MlpModel model = model_in;
    Vec xs = model.standardize(x);

    auto loss_at = [&](const std::vector<Layer>& layers) {
        Eigen::RowVectorXd s = xs.transpose();
        for (size_t l = 0; l + 1 < layers.size(); ++l)
            s = ((layers[l].W * s.transpose() + layers[l].b).cwiseMax(0.0)).transpose();
        Eigen::RowVectorXd out = (layers.back().W * s.transpose() + layers.back().b).transpose();
        return detail::head_loss(model.role, model.eps_list, h, out);
    };

    // analytic pass
    size_t L = model.layers.size();
    std::vector<Vec> acts(L);
    std::vector<Vec> zs(L - 1);
    Vec s = xs;
    for (size_t l = 0; l + 1 < L; ++l) {
        acts[l] = s;
        zs[l] = model.layers[l].W * s + model.layers[l].b;
        s = zs[l].cwiseMax(0.0);
    }
    acts[L - 1] = s;
    Eigen::RowVectorXd out = (model.layers.back().W * s + model.layers.back().b).transpose();
    Mat dout;
    detail::head_grad(model.role, model.eps_list, Vec::Constant(1, h), out, dout);
    std::vector<Layer> grads(L);
    Eigen::RowVectorXd delta = dout.row(0);
    for (size_t l = L; l-- > 0;) {
        grads[l].W = delta.transpose() * acts[l].transpose();
        grads[l].b = delta.transpose();
        if (l > 0) {
            delta = delta * model.layers[l].W;
            delta = delta.cwiseProduct(
                (zs[l - 1].array() > 0.0).cast<double>().matrix().transpose().eval());
        }
    }

    const double step = 1e-5;
    double worst = 0.0;
    auto probe = [&](double& param, double analytic) {
        double keep = param;
        param = keep + step;
        double up = loss_at(model.layers);
        param = keep - step;
        double dn = loss_at(model.layers);
        param = keep;
        double numeric = (up - dn) / (2.0 * step);
        double err = std::abs(analytic - numeric) /
                     std::max(1.0, std::abs(analytic) + std::abs(numeric));
        worst = std::max(worst, err);
    };
    for (size_t l = 0; l < L; ++l) {
        for (Eigen::Index r = 0; r < model.layers[l].W.rows(); ++r)
            for (Eigen::Index c = 0; c < model.layers[l].W.cols(); ++c)
                probe(model.layers[l].W(r, c), grads[l].W(r, c));
        for (Eigen::Index r = 0; r < model.layers[l].b.size(); ++r)
            probe(model.layers[l].b(r), grads[l].b(r));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Model file (versioned text, 17 significant digits).
// ---------------------------------------------------------------------------

inline void save_model(const MlpModel& model, const std::string& path) {
    model.validate();
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file: " + path);
    out << "jccs-mlp v1\n";
    out << "role " << (model.role == Role::quantile ? "quantile" : "loss") << "\n";
    out << "eps " << model.eps_list.size();
    for (double e : model.eps_list) out << " " << format_full(e);
    out << "\n";
    out << "input_dim " << model.input_dim << "\n";
    auto write_vec = [&](const char* name, const Vec& v) {
        out << name;
        for (Eigen::Index i = 0; i < v.size(); ++i) out << " " << format_full(v[i]);
        out << "\n";
    };
    write_vec("standardize_mean", model.feat_mean);
    write_vec("standardize_scale", model.feat_scale);
    write_vec("feature_lo", model.feat_lo);
    write_vec("feature_hi", model.feat_hi);
    out << "layers " << model.layers.size() << "\n";
    for (const Layer& l : model.layers) {
        out << "layer " << l.W.rows() << " " << l.W.cols() << "\n";
        for (Eigen::Index r = 0; r < l.W.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.W.cols(); ++c)
                out << (c ? " " : "") << format_full(l.W(r, c));
            out << "\n";
        }
        for (Eigen::Index r = 0; r < l.b.size(); ++r) out << (r ? " " : "") << format_full(l.b[r]);
        out << "\n";
    }
    if (!out) throw DataError("failed writing model file: " + path);
}

inline MlpModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file: " + path);
    std::string line;
    auto next_tokens = [&](const char* what) {
        for (;;) {
            if (!std::getline(in, line)) throw DataError(path + ": truncated before " + what);
            auto tok = split_ws(trim(line));
            if (!tok.empty()) return tok;
        }
    };
    auto tok = next_tokens("magic");
    if (tok.size() != 2 || tok[0] != "jccs-mlp" || tok[1] != "v1")
        throw DataError(path + ": not a jccs-mlp v1 file");
    MlpModel model;
    tok = next_tokens("role");
    if (tok.size() != 2 || tok[0] != "role") throw DataError(path + ": expected role");
    model.role = tok[1] == "quantile" ? Role::quantile : Role::loss;
    tok = next_tokens("eps");
    if (tok.size() < 2 || tok[0] != "eps") throw DataError(path + ": expected eps");
    size_t k = static_cast<size_t>(parse_long(tok[1], "eps count"));
    if (tok.size() != 2 + k) throw DataError(path + ": eps count mismatch");
    for (size_t i = 0; i < k; ++i) model.eps_list.push_back(parse_double(tok[2 + i], "eps"));
    tok = next_tokens("input_dim");
    if (tok.size() != 2 || tok[0] != "input_dim") throw DataError(path + ": expected input_dim");
    model.input_dim = static_cast<int>(parse_long(tok[1], "input_dim"));
    auto read_vec = [&](const char* name) {
        auto t = next_tokens(name);
        if (t[0] != name) throw DataError(path + ": expected " + std::string(name));
        Vec v(t.size() - 1);
        for (size_t i = 1; i < t.size(); ++i) v[i - 1] = parse_double(t[i], name);
        return v;
    };
    model.feat_mean = read_vec("standardize_mean");
    model.feat_scale = read_vec("standardize_scale");
    model.feat_lo = read_vec("feature_lo");
    model.feat_hi = read_vec("feature_hi");
    tok = next_tokens("layers");
    if (tok.size() != 2 || tok[0] != "layers") throw DataError(path + ": expected layers");
    long n_layers = parse_long(tok[1], "layer count");
    for (long l = 0; l < n_layers; ++l) {
        tok = next_tokens("layer");
        if (tok.size() != 3 || tok[0] != "layer") throw DataError(path + ": expected layer header");
        long rows = parse_long(tok[1], "rows"), cols = parse_long(tok[2], "cols");
        Layer layer{Mat(rows, cols), Vec(rows)};
        for (long r = 0; r < rows; ++r) {
            auto t = next_tokens("weight row");
            if (static_cast<long>(t.size()) != cols) throw DataError(path + ": weight row length");
            for (long c = 0; c < cols; ++c) layer.W(r, c) = parse_double(t[c], "weight");
        }
        auto t = next_tokens("bias row");
        if (static_cast<long>(t.size()) != rows) throw DataError(path + ": bias row length");
        for (long r = 0; r < rows; ++r) layer.b[r] = parse_double(t[r], "bias");
        model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
}

}  // namespace jccs::neural
