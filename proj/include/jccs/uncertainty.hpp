#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "jccs/common.hpp"
#include "jccs/grid.hpp"
#include "jccs/rng.hpp"

namespace jccs::uncertainty {

using Vec = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// DG uncertainty specification. Beta and Weibull draws are centered on the
// analytic mean of the base distribution and scaled by kappa, so E[omega] = 0;
// Gaussian draws come straight from the given (mean, std).
// ---------------------------------------------------------------------------

enum class OmegaKind { gaussian, beta, weibull };

struct OmegaSpec {
    OmegaKind kind = OmegaKind::gaussian;
    double a = 0.0;      // gaussian: mean | beta: alpha | weibull: scale
    double b = 0.1;      // gaussian: std  | beta: beta  | weibull: shape
    double kappa = 1.0;  // applied after centering
    double mu = 0.0;     // subtracted pre-scaling
    int dim = 1;         // one entry per DG

    double base_mean() const {
        switch (kind) {
            case OmegaKind::gaussian: return a;
            case OmegaKind::beta: return a / (a + b);
            case OmegaKind::weibull: return a * std::tgamma(1.0 + 1.0 / b);
        }
        return 0.0;
    }

    double base_std() const {
        switch (kind) {
            case OmegaKind::gaussian: return b;
            case OmegaKind::beta:
                return std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1.0)));
            case OmegaKind::weibull: {
                double g1 = std::tgamma(1.0 + 1.0 / b);
                double g2 = std::tgamma(1.0 + 2.0 / b);
                return a * std::sqrt(g2 - g1 * g1);
            }
        }
        return 0.0;
    }

    // Resulting std of omega after centering and scaling.
    double omega_std() const {
        return kind == OmegaKind::gaussian ? b : kappa * base_std();
    }

    void validate() const {
        if (dim < 0) throw std::invalid_argument("omega dimension must be >= 0");
        if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be > 0");
        switch (kind) {
            case OmegaKind::gaussian:
                if (!(b >= 0.0)) throw std::invalid_argument("gaussian std must be >= 0");
                break;
            case OmegaKind::beta:
                if (!(a > 0.0) || !(b > 0.0))
                    throw std::invalid_argument("beta shape parameters must be > 0");
                break;
            case OmegaKind::weibull:
                if (!(a > 0.0) || !(b > 0.0))
                    throw std::invalid_argument("weibull parameters must be > 0");
                break;
        }
    }

    static OmegaSpec gaussian(double mean, double std, int dim) {
        OmegaSpec s;
        s.kind = OmegaKind::gaussian;
        s.a = mean;
        s.b = std;
        s.dim = dim;
        s.validate();
        return s;
    }

    // kappa chosen so std(omega) = target_std, mu set to the analytic mean.
    static OmegaSpec beta_centered(double alpha, double beta, double target_std, int dim) {
        OmegaSpec s;
        s.kind = OmegaKind::beta;
        s.a = alpha;
        s.b = beta;
        s.dim = dim;
        s.validate();
        s.mu = s.base_mean();
        s.kappa = target_std / s.base_std();
        s.validate();
        return s;
    }

    static OmegaSpec weibull_centered(double scale, double shape, double target_std, int dim) {
        OmegaSpec s;
        s.kind = OmegaKind::weibull;
        s.a = scale;
        s.b = shape;
        s.dim = dim;
        s.validate();
        s.mu = s.base_mean();
        s.kappa = target_std / s.base_std();
        s.validate();
        return s;
    }
};

namespace detail {

inline double draw_omega_entry(const OmegaSpec& spec, rng::Philox& gen) {
    switch (spec.kind) {
        case OmegaKind::gaussian: return spec.b == 0.0 ? spec.a : gen.normal(spec.a, spec.b);
        case OmegaKind::beta: return spec.kappa * (gen.beta(spec.a, spec.b) - spec.mu);
        case OmegaKind::weibull: return spec.kappa * (gen.weibull(spec.a, spec.b) - spec.mu);
    }
    return 0.0;
}

}  // namespace detail

// n i.i.d. omega vectors. Sample i draws from Philox substream i of `seed`,
// so any index range can be generated independently and identically.
inline std::vector<Vec> sample_omega(const OmegaSpec& spec, long n, std::uint64_t seed) {
    if (n <= 0) throw std::invalid_argument("sample count must be > 0");
    spec.validate();
    std::vector<Vec> out(static_cast<size_t>(n));
    parallel_for(n, env_thread_count(), [&](long i) {
        rng::Philox gen(seed, static_cast<std::uint64_t>(i));
        Vec w(spec.dim);
        for (int d = 0; d < spec.dim; ++d) w[d] = detail::draw_omega_entry(spec, gen);
        out[static_cast<size_t>(i)] = w;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

enum class Provenance { historical, augmented };

// One observation. x is the nominal injection feature vector [p; q] over
// non-slack buses (omega = 0); h and p_loss come from the AC solution of the
// actual injection. For augmented records h holds the simulator prediction and
// p_loss is not meaningful (stored as 0).
struct DataRecord {
    Vec x;
    Vec omega;
    Vec lambda;
    double h = 0.0;
    double p_loss = 0.0;
};

struct Dataset {
    std::vector<DataRecord> records;
    Provenance provenance = Provenance::historical;
    long discarded = 0;  // non-converged draws redrawn during generation

    size_t size() const { return records.size(); }
    int feature_dim() const { return records.empty() ? 0 : static_cast<int>(records[0].x.size()); }

    void validate() const {
        for (const DataRecord& r : records) {
            if (r.x.size() != records[0].x.size() || r.omega.size() != records[0].omega.size())
                throw DataError("dataset records disagree on dimensionality");
            if (!std::isfinite(r.h) || !std::isfinite(r.p_loss) || r.p_loss < 0.0)
                throw DataError("dataset record has invalid h or p_loss");
        }
    }

    Eigen::MatrixXd feature_matrix() const {
        Eigen::MatrixXd X(records.size(), feature_dim());
        for (size_t i = 0; i < records.size(); ++i) X.row(i) = records[i].x;
        return X;
    }
    Vec h_vector() const {
        Vec y(records.size());
        for (size_t i = 0; i < records.size(); ++i) y[i] = records[i].h;
        return y;
    }
    Vec p_loss_vector() const {
        Vec y(records.size());
        for (size_t i = 0; i < records.size(); ++i) y[i] = records[i].p_loss;
        return y;
    }
};

// The sampling box for historical data: per-bus demand scaling and per-DG
// utilization are drawn uniformly from these ranges.
struct SamplingBox {
    double scale_lo = 0.6;
    double scale_hi = 1.4;
    double lambda_lo = 0.0;
    double lambda_hi = 1.0;
};

// Actual injection implied by a stored record: the nominal feature already
// contains -p_d + lambda*Gbar, so only the omega term needs to be added.
inline grid::Injection injection_from_record(const grid::RadialNetwork& net, const DataRecord& rec) {
    auto ns = net.non_slack();
    int k = static_cast<int>(ns.size());
    grid::Injection inj;
    inj.p = rec.x.head(k);
    inj.q = rec.x.tail(k);
    for (int d = 0; d < net.n_dg(); ++d) {
        const grid::DgUnit& u = net.dg[d];
        int col = 0;
        while (ns[col] != u.bus) ++col;
        double extra = rec.lambda[d] * u.g_bar * rec.omega[d];
        inj.p[col] += extra;
        inj.q[col] += u.phi * extra;
    }
    return inj;
}

// Generate the historical dataset by sampling the box, drawing omega, and
// solving AC power flow. Non-converged draws are redrawn from the same
// substream; more than 20% discards aborts (the box is mostly infeasible).
inline Dataset generate_historical(const grid::RadialNetwork& net, const OmegaSpec& spec, long n,
                                   const SamplingBox& box, std::uint64_t seed) {
    if (n <= 0) throw std::invalid_argument("record count must be > 0");
    if (spec.dim != net.n_dg())
        throw std::invalid_argument("omega dimension must equal the DG count");
    spec.validate();
    auto ns = net.non_slack();
    int k = static_cast<int>(ns.size());

    Dataset ds;
    ds.provenance = Provenance::historical;
    ds.records.resize(static_cast<size_t>(n));
    std::vector<long> discards(static_cast<size_t>(n), 0);

    parallel_for(n, env_thread_count(), [&](long i) {
        rng::Philox gen(seed, static_cast<std::uint64_t>(i));
        DataRecord rec;
        for (int attempt = 0;; ++attempt) {
            if (attempt > 200)
                throw GenerationError("record " + std::to_string(i) +
                                      ": no converging draw after 200 attempts");
            Vec pd(net.n_buses()), qd(net.n_buses());
            for (int b = 0; b < net.n_buses(); ++b) {
                double s = gen.uniform(box.scale_lo, box.scale_hi);
                pd[b] = net.p_demand[b] * s;
                qd[b] = net.q_demand[b] * s;
            }
            Vec lam(net.n_dg()), om(net.n_dg());
            for (int d = 0; d < net.n_dg(); ++d) {
                lam[d] = gen.uniform(box.lambda_lo, box.lambda_hi);
                om[d] = detail::draw_omega_entry(spec, gen);
            }
            if (om.size() > 0 && om.minCoeff() <= -1.0) {
                ++discards[static_cast<size_t>(i)];
                continue;
            }
            auto actual = grid::actual_injection_with_demand(net, pd, qd, lam, om);
            auto sol = grid::solve_power_flow(net, actual);
            if (!sol.converged) {
                ++discards[static_cast<size_t>(i)];
                continue;
            }
            rec.omega = om;
            rec.lambda = lam;
            rec.x.resize(2 * k);
            for (int c = 0; c < k; ++c) {
                rec.x[c] = -pd[ns[c]];
                rec.x[k + c] = -qd[ns[c]];
            }
            for (int d = 0; d < net.n_dg(); ++d) {
                int col = 0;
                while (ns[col] != net.dg[d].bus) ++col;
                double nominal = lam[d] * net.dg[d].g_bar;
                rec.x[col] += nominal;
                rec.x[k + col] += net.dg[d].phi * nominal;
            }
            rec.h = grid::max_violation(sol, net);
            rec.p_loss = sol.p_loss;
            break;
        }
        ds.records[static_cast<size_t>(i)] = std::move(rec);
    });

    for (long d : discards) ds.discarded += d;
    if (ds.discarded > 0 &&
        static_cast<double>(ds.discarded) / static_cast<double>(n + ds.discarded) > 0.2)
        throw GenerationError("sampling box yields > 20% non-converged draws (" +
                              std::to_string(ds.discarded) + " of " +
                              std::to_string(n + ds.discarded) + ")");
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset file: comma-delimited, one record per row, 17 significant digits
// (lossless round-trip). Header names every column; a leading comment line
// carries the provenance tag.
// ---------------------------------------------------------------------------

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file: " + path);
    out << "# jccs-dataset v1 provenance="
        << (ds.provenance == Provenance::historical ? "historical" : "augmented")
        << " discarded=" << ds.discarded << "\n";
    int d = ds.records.empty() ? 0 : static_cast<int>(ds.records[0].x.size());
    int m = ds.records.empty() ? 0 : static_cast<int>(ds.records[0].omega.size());
    for (int i = 0; i < d; ++i) out << "x" << i << ",";
    for (int i = 0; i < m; ++i) out << "omega" << i << ",";
    for (int i = 0; i < m; ++i) out << "lambda" << i << ",";
    out << "h,p_loss\n";
    for (const DataRecord& r : ds.records) {
        for (int i = 0; i < d; ++i) out << format_full(r.x[i]) << ",";
        for (int i = 0; i < m; ++i) out << format_full(r.omega[i]) << ",";
        for (int i = 0; i < m; ++i) out << format_full(r.lambda[i]) << ",";
        out << format_full(r.h) << "," << format_full(r.p_loss) << "\n";
    }
    if (!out) throw DataError("failed writing dataset file: " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);
    Dataset ds;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# jccs-dataset v1", 0) != 0)
        throw DataError(path + ": not a jccs dataset file");
    ds.provenance = line.find("provenance=augmented") != std::string::npos
                        ? Provenance::augmented
                        : Provenance::historical;
    size_t dpos = line.find("discarded=");
    if (dpos != std::string::npos)
        ds.discarded = std::strtol(line.c_str() + dpos + 10, nullptr, 10);
    if (!std::getline(in, line)) throw DataError(path + ": missing header row");
    auto cols = split_char(line, ',');
    int d = 0, m = 0;
    for (const auto& c : cols) {
        if (c.rfind("x", 0) == 0 && c != "h") ++d;
        else if (c.rfind("omega", 0) == 0) ++m;
    }
    int lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto tok = split_char(line, ',');
        if (static_cast<int>(tok.size()) != d + 2 * m + 2)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(d + 2 * m + 2) + " columns, got " +
                            std::to_string(tok.size()));
        DataRecord r;
        r.x.resize(d);
        r.omega.resize(m);
        r.lambda.resize(m);
        int c = 0;
        for (int i = 0; i < d; ++i) r.x[i] = parse_double(tok[c++], "x");
        for (int i = 0; i < m; ++i) r.omega[i] = parse_double(tok[c++], "omega");
        for (int i = 0; i < m; ++i) r.lambda[i] = parse_double(tok[c++], "lambda");
        r.h = parse_double(tok[c++], "h");
        r.p_loss = parse_double(tok[c++], "p_loss");
        ds.records.push_back(std::move(r));
    }
    ds.validate();
    return ds;
}

}  // namespace jccs::uncertainty
