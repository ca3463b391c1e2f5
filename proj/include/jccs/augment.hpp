#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "jccs/common.hpp"
#include "jccs/rng.hpp"
#include "jccs/uncertainty.hpp"

namespace jccs::augment {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Gradient-boosted regression trees (squared error, exact greedy splits).
// The simulator maps (x, omega) -> h.
// ---------------------------------------------------------------------------

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict(const Vec& x) const {
        int cur = 0;
        while (nodes[cur].feature >= 0)
            cur = x[nodes[cur].feature] <= nodes[cur].threshold ? nodes[cur].left
                                                                : nodes[cur].right;
        return nodes[cur].value;
    }
};

struct GbtModel {
    std::vector<Tree> trees;
    double learning_rate = 0.1;
    double base = 0.0;

    double predict(const Vec& x) const {
        double acc = base;
        for (const Tree& t : trees) acc += learning_rate * t.predict(x);
        return acc;
    }

    double predict_record(const uncertainty::DataRecord& rec) const {
        Vec xi(rec.x.size() + rec.omega.size());
        xi << rec.x, rec.omega;
        return predict(xi);
    }
};

struct GbtParams {
    int n_trees = 200;
    int max_depth = 6;
    double learning_rate = 0.1;
    int min_samples_leaf = 5;
    double holdout_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct GbtTrainResult {
    GbtModel model;
    double holdout_rmse = 0.0;
    double baseline_rmse = 0.0;  // constant-predictor RMSE on the same holdout
};

namespace detail {

// One boosting tree fit to the residuals, level by level. Split search walks
// per-feature sorted index lists, so candidates are exact. Ties break on the
// lowest feature index, then the lowest threshold.
inline Tree fit_tree(const Mat& X, const Vec& residual, const std::vector<long>& rows,
                     const std::vector<std::vector<long>>& sorted, int max_depth,
                     int min_leaf, std::vector<int>& node_of) {
    int d = static_cast<int>(X.cols());
    Tree tree;

    struct NodeStat {
        long count = 0;
        double sum = 0.0;
        double best_gain = 0.0;
        int best_feature = -1;
        double best_threshold = 0.0;
    };

    for (long i : rows) node_of[i] = 0;
    tree.nodes.push_back({});
    std::vector<int> level = {0};

    for (int depth = 0; depth < max_depth && !level.empty(); ++depth) {
        std::vector<NodeStat> stats(tree.nodes.size());
        for (long i : rows) {
            stats[node_of[i]].count += 1;
            stats[node_of[i]].sum += residual[i];
        }
        // split search, one sweep per feature over globally sorted order;
        // ascending (feature, threshold) iteration keeps the first candidate
        // on ties, which is the documented tie-break rule
        std::vector<char> is_active(tree.nodes.size(), 0);
        for (int node : level) is_active[node] = 1;
        std::vector<double> run_cnt(tree.nodes.size()), run_sum(tree.nodes.size()),
            last_val(tree.nodes.size());
        std::vector<char> started(tree.nodes.size());
        for (int f = 0; f < d; ++f) {
            std::fill(run_cnt.begin(), run_cnt.end(), 0.0);
            std::fill(run_sum.begin(), run_sum.end(), 0.0);
            std::fill(started.begin(), started.end(), 0);
            for (long i : sorted[f]) {
                int node = node_of[i];
                if (node < 0 || !is_active[node]) continue;
                NodeStat& st = stats[node];
                double v = X(i, f);
                if (started[node] && v > last_val[node] && run_cnt[node] >= min_leaf &&
                    st.count - run_cnt[node] >= min_leaf) {
                    double nl = run_cnt[node], nr = static_cast<double>(st.count) - nl;
                    double sl = run_sum[node], sr = st.sum - sl;
                    double gain = sl * sl / nl + sr * sr / nr - st.sum * st.sum /
                                                                    static_cast<double>(st.count);
                    if (gain > st.best_gain + 1e-12) {
                        st.best_gain = gain;
                        st.best_feature = f;
                        st.best_threshold = 0.5 * (last_val[node] + v);
                    }
                }
                run_cnt[node] += 1.0;
                run_sum[node] += residual[i];
                last_val[node] = v;
                started[node] = 1;
            }
        }
        // materialize splits
        std::vector<int> next_level;
        for (int node : level) {
            NodeStat& st = stats[node];
            if (st.best_feature < 0 || st.best_gain <= 1e-12) continue;
            tree.nodes[node].feature = st.best_feature;
            tree.nodes[node].threshold = st.best_threshold;
            tree.nodes[node].left = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back({});
            tree.nodes[node].right = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back({});
            next_level.push_back(tree.nodes[node].left);
            next_level.push_back(tree.nodes[node].right);
        }
        if (next_level.empty()) break;
        for (long i : rows) {
            int node = node_of[i];
            if (tree.nodes[node].feature >= 0)
                node_of[i] = X(i, tree.nodes[node].feature) <= tree.nodes[node].threshold
                                 ? tree.nodes[node].left
                                 : tree.nodes[node].right;
        }
        level = std::move(next_level);
    }

    // leaf values: mean residual
    std::vector<double> cnt(tree.nodes.size(), 0.0), sum(tree.nodes.size(), 0.0);
    for (long i : rows) {
        cnt[node_of[i]] += 1.0;
        sum[node_of[i]] += residual[i];
    }
    for (size_t k = 0; k < tree.nodes.size(); ++k)
        if (tree.nodes[k].feature == -1 && cnt[k] > 0.0) tree.nodes[k].value = sum[k] / cnt[k];
    return tree;
}

}  // namespace detail

inline GbtTrainResult train_simulator_xy(const Mat& X, const Vec& y, const GbtParams& params) {
    long n = X.rows();
    if (n == 0 || y.size() != n) throw std::invalid_argument("empty or mismatched training data");
    int d = static_cast<int>(X.cols());

    // deterministic holdout split
    std::vector<long> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng::Philox gen(params.seed, 0);
    for (long i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[gen.uniform_index(static_cast<std::uint64_t>(i + 1))]);
    long n_hold = std::min(n - 1, std::max<long>(0, std::lround(params.holdout_fraction *
                                                                static_cast<double>(n))));
    std::vector<long> hold(perm.end() - n_hold, perm.end());
    std::vector<long> rows(perm.begin(), perm.end() - n_hold);

    // per-feature sorted order over the training rows (stable on ties)
    std::vector<std::vector<long>> sorted(d, rows);
    for (int f = 0; f < d; ++f)
        std::stable_sort(sorted[f].begin(), sorted[f].end(),
                         [&](long a, long b) { return X(a, f) < X(b, f); });

    GbtTrainResult result;
    GbtModel& model = result.model;
    model.learning_rate = params.learning_rate;
    double base = 0.0;
    for (long i : rows) base += y[i];
    model.base = base / static_cast<double>(rows.size());

    Vec pred = Vec::Constant(n, model.base);
    Vec residual = y - pred;
    std::vector<int> node_of(n, -1);
    for (int t = 0; t < params.n_trees; ++t) {
        Tree tree = detail::fit_tree(X, residual, rows, sorted, params.max_depth,
                                     params.min_samples_leaf, node_of);
        if (tree.nodes.size() == 1 && std::abs(tree.nodes[0].value) < 1e-15) break;
        model.trees.push_back(tree);
        for (long i = 0; i < n; ++i) {
            pred[i] += params.learning_rate * model.trees.back().predict(X.row(i));
            residual[i] = y[i] - pred[i];
        }
    }

    double se = 0.0, se_const = 0.0;
    for (long i : hold) {
        se += (y[i] - pred[i]) * (y[i] - pred[i]);
        se_const += (y[i] - model.base) * (y[i] - model.base);
    }
    result.holdout_rmse = hold.empty() ? 0.0 : std::sqrt(se / static_cast<double>(hold.size()));
    result.baseline_rmse =
        hold.empty() ? 0.0 : std::sqrt(se_const / static_cast<double>(hold.size()));
    return result;
}

// Simulator training per the pre-processing pipeline: inputs are (x, omega)
// concatenated, the target is h.
inline GbtTrainResult train_simulator(const uncertainty::Dataset& historical,
                                      const GbtParams& params) {
    if (historical.records.empty()) throw std::invalid_argument("historical dataset is empty");
    long n = static_cast<long>(historical.size());
    int dx = static_cast<int>(historical.records[0].x.size());
    int dw = static_cast<int>(historical.records[0].omega.size());
    Mat X(n, dx + dw);
    Vec y(n);
    for (long i = 0; i < n; ++i) {
        X.row(i).head(dx) = historical.records[i].x;
        X.row(i).tail(dw) = historical.records[i].omega;
        y[i] = historical.records[i].h;
    }
    return train_simulator_xy(X, y, params);
}

// ---------------------------------------------------------------------------
// Algorithm: data augmentation. Picks K feature vectors from the historical
// pool (without replacement while K <= N), pairs each with N_omega omega draws
// (with replacement), and labels every pair with the simulator prediction.
// ---------------------------------------------------------------------------

inline uncertainty::Dataset augment_dataset(const GbtModel& sim,
                                            const uncertainty::Dataset& historical, long K,
                                            long n_omega, std::uint64_t seed) {
    if (K <= 0 || n_omega <= 0) throw std::invalid_argument("K and N_omega must be > 0");
    if (historical.records.empty()) throw std::invalid_argument("historical dataset is empty");
    long n = static_cast<long>(historical.size());

    std::vector<long> x_pick(K);
    rng::Philox gen(seed, 0);
    if (K <= n) {
        std::vector<long> pool(n);
        std::iota(pool.begin(), pool.end(), 0);
        for (long k = 0; k < K; ++k) {
            long j = k + static_cast<long>(gen.uniform_index(static_cast<std::uint64_t>(n - k)));
            std::swap(pool[k], pool[j]);
            x_pick[k] = pool[k];
        }
    } else {
        for (long k = 0; k < K; ++k)
            x_pick[k] = static_cast<long>(gen.uniform_index(static_cast<std::uint64_t>(n)));
    }

    uncertainty::Dataset out;
    out.provenance = uncertainty::Provenance::augmented;
    out.records.resize(static_cast<size_t>(K * n_omega));
    parallel_for(K, env_thread_count(), [&](long k) {
        rng::Philox pick(seed, static_cast<std::uint64_t>(1 + k));
        const auto& src = historical.records[x_pick[k]];
        for (long j = 0; j < n_omega; ++j) {
            const auto& wsrc =
                historical.records[pick.uniform_index(static_cast<std::uint64_t>(n))];
            uncertainty::DataRecord rec;
            rec.x = src.x;
            rec.lambda = src.lambda;
            rec.omega = wsrc.omega;
            rec.h = sim.predict_record(rec);
            rec.p_loss = 0.0;
            out.records[static_cast<size_t>(k * n_omega + j)] = std::move(rec);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Calibration: rho covers the simulator's worst underestimation on the
// historical set, clamped at zero so the surrogate constraint only tightens.
// ---------------------------------------------------------------------------

struct CalibrationResult {
    double rho = 0.0;
    long worst_index = -1;
    double residual_min = 0.0;
    double residual_mean = 0.0;
    double residual_max = 0.0;
};

inline CalibrationResult calibrate(const GbtModel& sim, const uncertainty::Dataset& historical) {
    if (historical.records.empty()) throw std::invalid_argument("historical dataset is empty");
    CalibrationResult res;
    res.residual_min = std::numeric_limits<double>::infinity();
    res.residual_max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (size_t i = 0; i < historical.size(); ++i) {
        double r = historical.records[i].h - sim.predict_record(historical.records[i]);
        sum += r;
        res.residual_min = std::min(res.residual_min, r);
        if (r > res.residual_max) {
            res.residual_max = r;
            res.worst_index = static_cast<long>(i);
        }
    }
    res.residual_mean = sum / static_cast<double>(historical.size());
    res.rho = std::max(0.0, res.residual_max);
    return res;
}

// ---------------------------------------------------------------------------
// Model file: one tuple per node, exact round-trip.
// ---------------------------------------------------------------------------

inline void save_gbt(const GbtModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write gbt file: " + path);
    out << "jccs-gbt v1\n";
    out << "base " << format_full(model.base) << "\n";
    out << "learning_rate " << format_full(model.learning_rate) << "\n";
    out << "trees " << model.trees.size() << "\n";
    for (const Tree& t : model.trees) {
        out << "tree " << t.nodes.size() << "\n";
        for (const TreeNode& nd : t.nodes)
            out << nd.feature << " " << format_full(nd.threshold) << " " << nd.left << " "
                << nd.right << " " << format_full(nd.value) << "\n";
    }
    if (!out) throw DataError("failed writing gbt file: " + path);
}

inline GbtModel load_gbt(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open gbt file: " + path);
    std::string line;
    auto next = [&](const char* what) {
        for (;;) {
            if (!std::getline(in, line)) throw DataError(path + ": truncated before " + what);
            auto tok = split_ws(trim(line));
            if (!tok.empty()) return tok;
        }
    };
    auto tok = next("magic");
    if (tok.size() != 2 || tok[0] != "jccs-gbt" || tok[1] != "v1")
        throw DataError(path + ": not a jccs-gbt v1 file");
    GbtModel model;
    tok = next("base");
    model.base = parse_double(tok.at(1), "base");
    tok = next("learning_rate");
    model.learning_rate = parse_double(tok.at(1), "learning_rate");
    tok = next("trees");
    long n_trees = parse_long(tok.at(1), "tree count");
    for (long t = 0; t < n_trees; ++t) {
        tok = next("tree");
        long n_nodes = parse_long(tok.at(1), "node count");
        Tree tree;
        for (long k = 0; k < n_nodes; ++k) {
            tok = next("node");
            if (tok.size() != 5) throw DataError(path + ": node row needs 5 fields");
            TreeNode nd;
            nd.feature = static_cast<int>(parse_long(tok[0], "feature"));
            nd.threshold = parse_double(tok[1], "threshold");
            nd.left = static_cast<int>(parse_long(tok[2], "left"));
            nd.right = static_cast<int>(parse_long(tok[3], "right"));
            nd.value = parse_double(tok[4], "value");
            tree.nodes.push_back(nd);
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

}  // namespace jccs::augment
