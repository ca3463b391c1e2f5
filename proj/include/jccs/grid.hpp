#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "jccs/common.hpp"

namespace jccs::grid {

using Vec = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Network data model. All electrical quantities are stored per-unit on
// (s_base_mva, v_base_kv); the branch current base is
// I_base = S_base / (sqrt(3) * V_base), which converts the kA ratings of the
// network file. Buses are indexed 0..n-1 in file order; index 0 is not
// required to be the slack.
// ---------------------------------------------------------------------------

struct Branch {
    int from = -1;
    int to = -1;
    double r = 0.0;      // p.u.
    double x = 0.0;      // p.u.
    double i_max = 0.0;  // p.u.
};

struct DgUnit {
    int bus = -1;
    double g_bar = 0.0;  // nominal available power, p.u.
    double phi = 0.0;    // reactive ratio
};

struct RadialNetwork {
    std::vector<long> bus_ids;  // external ids, file order
    Vec p_demand, q_demand;     // p.u., size n (slack entry included)
    std::vector<Branch> branches;
    int slack = 0;
    double v1 = 1.0;  // slack voltage magnitude, p.u.
    double v_min = 0.9, v_max = 1.1;
    double s_base_mva = 10.0, v_base_kv = 12.66;
    std::vector<DgUnit> dg;

    // Derived topology, filled by build_topology().
    std::vector<int> parent;         // parent bus per bus (-1 at slack)
    std::vector<int> parent_branch;  // branch index into `branches` (-1 at slack)
    std::vector<std::vector<int>> child_branches;
    std::vector<int> order;  // buses root-first (BFS)

    int n_buses() const { return static_cast<int>(bus_ids.size()); }
    int n_branches() const { return static_cast<int>(branches.size()); }
    int n_dg() const { return static_cast<int>(dg.size()); }
    double i_base_ka() const { return s_base_mva / (std::sqrt(3.0) * v_base_kv); }

    // Non-slack buses in file order; Injection vectors follow this indexing.
    std::vector<int> non_slack() const {
        std::vector<int> out;
        out.reserve(n_buses() - 1);
        for (int b = 0; b < n_buses(); ++b)
            if (b != slack) out.push_back(b);
        return out;
    }

    bool is_tree() const {
        int n = n_buses();
        if (n_branches() != n - 1) return false;
        std::vector<int> uf(n);
        std::iota(uf.begin(), uf.end(), 0);
        auto find = [&](int a) {
            while (uf[a] != a) a = uf[a] = uf[uf[a]];
            return a;
        };
        for (const Branch& br : branches) {
            int ra = find(br.from), rb = find(br.to);
            if (ra == rb) return false;  // cycle
            uf[ra] = rb;
        }
        return true;  // n-1 edges and acyclic => connected tree
    }

    void build_topology() {
        if (!is_tree()) throw StructuralError("network branches do not form a tree");
        int n = n_buses();
        parent.assign(n, -1);
        parent_branch.assign(n, -1);
        child_branches.assign(n, {});
        std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbor, branch)
        for (int e = 0; e < n_branches(); ++e) {
            adj[branches[e].from].push_back({branches[e].to, e});
            adj[branches[e].to].push_back({branches[e].from, e});
        }
        order.clear();
        order.reserve(n);
        std::vector<char> seen(n, 0);
        order.push_back(slack);
        seen[slack] = 1;
        for (size_t qi = 0; qi < order.size(); ++qi) {
            int b = order[qi];
            for (auto [nb, e] : adj[b]) {
                if (seen[nb]) continue;
                seen[nb] = 1;
                parent[nb] = b;
                parent_branch[nb] = e;
                // orient the branch parent -> child
                if (branches[e].from != b) std::swap(branches[e].from, branches[e].to);
                child_branches[b].push_back(e);
                order.push_back(nb);
            }
        }
    }

    void validate() const {
        if (n_buses() < 2) throw DataError("network needs at least two buses");
        if (!is_tree()) throw StructuralError("network branches do not form a tree");
        for (const Branch& br : branches) {
            if (!(br.r > 0.0)) throw DataError("branch resistance must be > 0");
            if (!(br.x >= 0.0)) throw DataError("branch reactance must be >= 0");
            if (!(br.i_max > 0.0)) throw DataError("branch current limit must be > 0");
        }
        if (!(v_min < v_max)) throw DataError("v_min must be < v_max");
        for (const DgUnit& u : dg) {
            if (u.bus == slack) throw DataError("DG may not sit on the slack bus");
            if (!(u.g_bar >= 0.0)) throw DataError("DG nominal power must be >= 0");
        }
    }
};

// Per-bus injections over non-slack buses (see RadialNetwork::non_slack).
struct Injection {
    Vec p;
    Vec q;
};

struct PowerFlowSolution {
    Vec v;        // per-bus voltage magnitude, p.u.
    Vec i;        // per-branch current magnitude, p.u.
    Vec flow_p;   // per-branch sending-end active flow, p.u.
    Vec flow_q;   // per-branch sending-end reactive flow, p.u.
    double p_loss = 0.0;
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;  // max DistFlow equation residual
};

// ---------------------------------------------------------------------------
// Injections
// ---------------------------------------------------------------------------

// Injection for demand vectors other than the network's nominal ones
// (dataset generation scales demand per record).
inline Injection actual_injection_with_demand(const RadialNetwork& net, const Vec& p_demand,
                                              const Vec& q_demand, const Vec& lambda,
                                              const Vec& omega) {
    if (lambda.size() != net.n_dg() || omega.size() != net.n_dg())
        throw std::invalid_argument("lambda/omega length must equal DG count");
    for (int d = 0; d < lambda.size(); ++d) {
        if (!(lambda[d] >= 0.0 && lambda[d] <= 1.0))
            throw std::domain_error("lambda must lie in [0,1]");
        if (!(omega[d] > -1.0)) throw std::domain_error("omega must be > -1");
    }
    auto ns = net.non_slack();
    Injection inj;
    inj.p.resize(ns.size());
    inj.q.resize(ns.size());
    for (size_t k = 0; k < ns.size(); ++k) {
        inj.p[k] = -p_demand[ns[k]];
        inj.q[k] = -q_demand[ns[k]];
    }
    for (int d = 0; d < net.n_dg(); ++d) {
        const DgUnit& u = net.dg[d];
        auto it = std::find(ns.begin(), ns.end(), u.bus);
        size_t k = static_cast<size_t>(it - ns.begin());
        double pdg = lambda[d] * u.g_bar * (1.0 + omega[d]);
        inj.p[k] += pdg;
        inj.q[k] += u.phi * pdg;
    }
    return inj;
}

inline Injection actual_injection(const RadialNetwork& net, const Vec& lambda, const Vec& omega) {
    return actual_injection_with_demand(net, net.p_demand, net.q_demand, lambda, omega);
}

// ---------------------------------------------------------------------------
// Power flow: backward/forward sweep on the DistFlow equations.
// Backward pass accumulates sending-end branch flows leaf->root (with the
// branch loss solved against the parent voltage of the previous iterate);
// forward pass updates squared voltages root->leaf. Stops when the voltage
// update falls below 1e-8 p.u. or after 100 iterations. A voltage collapse
// (V^2 <= 0 during the forward pass) yields converged = false, not a throw.
// ---------------------------------------------------------------------------

namespace detail {

inline double distflow_residual(const RadialNetwork& net, const Vec& p_full, const Vec& q_full,
                                const PowerFlowSolution& sol) {
    double worst = 0.0;
    for (int b : net.order) {
        if (b == net.slack) continue;
        int e = net.parent_branch[b];
        const Branch& br = net.branches[e];
        double isq = sol.i[e] * sol.i[e];
        double child_p = 0.0, child_q = 0.0;
        for (int ce : net.child_branches[b]) {
            child_p += sol.flow_p[ce];
            child_q += sol.flow_q[ce];
        }
        double vi2 = sol.v[br.from] * sol.v[br.from];
        double vj2 = sol.v[br.to] * sol.v[br.to];
        worst = std::max(worst, std::abs(child_p - (p_full[b] + sol.flow_p[e] - br.r * isq)));
        worst = std::max(worst, std::abs(child_q - (q_full[b] + sol.flow_q[e] - br.x * isq)));
        worst = std::max(worst, std::abs(vj2 - (vi2 - 2.0 * (br.r * sol.flow_p[e] + br.x * sol.flow_q[e]) +
                                                (br.r * br.r + br.x * br.x) * isq)));
        worst = std::max(worst, std::abs(isq - (sol.flow_p[e] * sol.flow_p[e] +
                                                sol.flow_q[e] * sol.flow_q[e]) / vi2));
    }
    return worst;
}

}  // namespace detail

inline PowerFlowSolution solve_power_flow(const RadialNetwork& net, const Injection& inj,
                                          double tol = 1e-8, int max_iter = 100) {
    if (net.order.empty() || net.parent.size() != static_cast<size_t>(net.n_buses()))
        throw StructuralError("network topology not built (call build_topology)");
    auto ns = net.non_slack();
    if (inj.p.size() != static_cast<Eigen::Index>(ns.size()) ||
        inj.q.size() != static_cast<Eigen::Index>(ns.size()))
        throw std::invalid_argument("injection length must equal non-slack bus count");
    if (!inj.p.allFinite() || !inj.q.allFinite())
        throw std::invalid_argument("injections must be finite");

    int n = net.n_buses(), m = net.n_branches();
    Vec p_full = Vec::Zero(n), q_full = Vec::Zero(n);
    for (size_t k = 0; k < ns.size(); ++k) {
        p_full[ns[k]] = inj.p[k];
        q_full[ns[k]] = inj.q[k];
    }

    PowerFlowSolution sol;
    sol.v = Vec::Constant(n, net.v1);
    sol.i = Vec::Zero(m);
    sol.flow_p = Vec::Zero(m);
    sol.flow_q = Vec::Zero(m);
    Vec vsq = Vec::Constant(n, net.v1 * net.v1);
    Vec isq = Vec::Zero(m);

    bool collapsed = false;
    bool v_settled = false;
    int it = 0;
    for (; it < max_iter; ++it) {
        // backward: sending-end flows, leaf -> root
        for (int oi = n - 1; oi >= 0; --oi) {
            int b = net.order[oi];
            if (b == net.slack) continue;
            int e = net.parent_branch[b];
            const Branch& br = net.branches[e];
            double recv_p = -p_full[b];
            double recv_q = -q_full[b];
            for (int ce : net.child_branches[b]) {
                recv_p += sol.flow_p[ce];
                recv_q += sol.flow_q[ce];
            }
            double vi2 = vsq[br.from];
            // solve P = recv_p + r*I^2, Q = recv_q + x*I^2, I^2 = (P^2+Q^2)/vi2
            double cur = isq[e];
            for (int k = 0; k < 60; ++k) {
                double pp = recv_p + br.r * cur;
                double qq = recv_q + br.x * cur;
                double nxt = (pp * pp + qq * qq) / vi2;
                if (std::abs(nxt - cur) <= 1e-16 + 1e-14 * std::abs(nxt)) {
                    cur = nxt;
                    break;
                }
                cur = nxt;
            }
            isq[e] = cur;
            sol.flow_p[e] = recv_p + br.r * cur;
            sol.flow_q[e] = recv_q + br.x * cur;
        }
        // forward: squared voltages, root -> leaf
        double dv = 0.0;
        for (int b : net.order) {
            if (b == net.slack) continue;
            int e = net.parent_branch[b];
            const Branch& br = net.branches[e];
            double v2 = vsq[br.from] - 2.0 * (br.r * sol.flow_p[e] + br.x * sol.flow_q[e]) +
                        (br.r * br.r + br.x * br.x) * isq[e];
            if (!(v2 > 0.0) || !std::isfinite(v2)) {
                collapsed = true;
                break;
            }
            double vnew = std::sqrt(v2);
            dv = std::max(dv, std::abs(vnew - sol.v[b]));
            vsq[b] = v2;
            sol.v[b] = vnew;
        }
        if (collapsed) break;
        if (dv < tol) {
            ++it;
            v_settled = true;
            break;
        }
    }

    sol.iterations = it;
    sol.i = isq.cwiseMax(0.0).cwiseSqrt();
    sol.p_loss = 0.0;
    for (int e = 0; e < m; ++e) sol.p_loss += net.branches[e].r * isq[e];
    if (!collapsed) {
        sol.residual = detail::distflow_residual(net, p_full, q_full, sol);
        sol.converged = v_settled && sol.residual <= 1e-6;
    } else {
        sol.converged = false;
        sol.residual = std::numeric_limits<double>::infinity();
    }
    return sol;
}

// ---------------------------------------------------------------------------
// Scalar metrics
// ---------------------------------------------------------------------------

// Maximum normalized limit violation. Voltage residuals are normalized by the
// 1 p.u. nominal, current residuals by the branch's own limit, so every
// component is dimensionless and h <= 0 iff all operating limits hold.
inline double max_violation(const PowerFlowSolution& sol, const RadialNetwork& net) {
    if (!sol.converged) throw std::domain_error("max_violation requires a converged solution");
    double h = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < net.n_buses(); ++b) {
        h = std::max(h, net.v_min - sol.v[b]);
        h = std::max(h, sol.v[b] - net.v_max);
    }
    for (int e = 0; e < net.n_branches(); ++e)
        h = std::max(h, (sol.i[e] - net.branches[e].i_max) / net.branches[e].i_max);
    return h;
}

inline double energy_purchase_with_demand(const RadialNetwork& net, const Vec& p_demand,
                                          const Vec& lambda, const Vec& omega,
                                          const PowerFlowSolution& sol) {
    if (!sol.converged) throw std::domain_error("energy_purchase requires a converged solution");
    double demand = p_demand.sum();
    double dg = 0.0;
    for (int d = 0; d < net.n_dg(); ++d) dg += lambda[d] * net.dg[d].g_bar * (1.0 + omega[d]);
    double g = demand + sol.p_loss - dg;
    // power balance: G equals the slack-bus injection
    double slack_inj = 0.0;
    for (int ce : net.child_branches[net.slack]) slack_inj += sol.flow_p[ce];
    if (std::abs(g - slack_inj) > 1e-4)
        throw InternalError("energy purchase disagrees with slack injection by " +
                            format_full(std::abs(g - slack_inj)));
    return g;
}

inline double energy_purchase(const RadialNetwork& net, const Vec& lambda, const Vec& omega,
                              const PowerFlowSolution& sol) {
    return energy_purchase_with_demand(net, net.p_demand, lambda, omega, sol);
}

// ---------------------------------------------------------------------------
// LinDistFlow: loss and current terms dropped, which makes squared voltages
// and branch flows affine in the injections. Index convention for the input
// vectors matches Injection (non-slack buses, file order).
// ---------------------------------------------------------------------------

struct LinDistFlowModel {
    double vsq0 = 1.0;        // squared slack voltage
    Eigen::MatrixXd sens_vp;  // d(V_j^2)/dp, (n_buses x n_nonslack)
    Eigen::MatrixXd sens_vq;
    Eigen::MatrixXd flow_map;  // branch sending flow = -flow_map * injection
    std::vector<int> ns;       // non-slack bus indices

    Vec voltage_sq(const Vec& p, const Vec& q) const {
        return Vec::Constant(sens_vp.rows(), vsq0) + sens_vp * p + sens_vq * q;
    }
    Vec branch_p(const Vec& p) const { return -flow_map * p; }
    Vec branch_q(const Vec& q) const { return -flow_map * q; }
};

inline LinDistFlowModel lindistflow(const RadialNetwork& net) {
    if (net.order.empty()) throw StructuralError("network topology not built");
    if (!net.is_tree()) throw StructuralError("network branches do not form a tree");
    int n = net.n_buses(), m = net.n_branches();
    auto ns = net.non_slack();
    int k = static_cast<int>(ns.size());
    std::vector<int> col_of(n, -1);
    for (int i = 0; i < k; ++i) col_of[ns[i]] = i;

    LinDistFlowModel model;
    model.vsq0 = net.v1 * net.v1;
    model.ns = ns;
    model.flow_map = Eigen::MatrixXd::Zero(m, k);
    // subtree membership: branch e carries the net injection of every bus below it
    for (int b : net.order) {
        if (b == net.slack) continue;
        // walk up from b; every branch on the path to the root sees bus b
        int cur = b;
        while (cur != net.slack) {
            int e = net.parent_branch[cur];
            model.flow_map(e, col_of[b]) = 1.0;
            cur = net.parent[cur];
        }
    }
    model.sens_vp = Eigen::MatrixXd::Zero(n, k);
    model.sens_vq = Eigen::MatrixXd::Zero(n, k);
    for (int b : net.order) {
        if (b == net.slack) continue;
        int pb = net.parent[b];
        int e = net.parent_branch[b];
        const Branch& br = net.branches[e];
        // V_j^2 = V_i^2 - 2(r P + x Q), P = -flow_map*p
        model.sens_vp.row(b) = model.sens_vp.row(pb) + 2.0 * br.r * model.flow_map.row(e);
        model.sens_vq.row(b) = model.sens_vq.row(pb) + 2.0 * br.x * model.flow_map.row(e);
    }
    return model;
}

// ---------------------------------------------------------------------------
// Network file loader.
//
// Format (whitespace separated, '#' starts a comment):
//   [base]      s_base_mva <v> / v_base_kv <v>
//   [slack]     bus <id> / v1_pu <v>
//   [buses]     <id> <p_d_mw> <q_d_mvar>          one row per bus
//   [branches]  <from> <to> <r_ohm> <x_ohm>
//   [limits]    v_min_pu <v> / v_max_pu <v> / i_max_ka <v>
//               branch <from> <to> <i_max_ka>     optional per-branch override
//   [dg]        <bus> <g_bar_mw> <phi>
// Errors carry the file path and line number.
// ---------------------------------------------------------------------------

inline RadialNetwork load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open network file: " + path);

    auto fail = [&](int line, const std::string& msg) -> void {
        throw DataError(path + ":" + std::to_string(line) + ": " + msg);
    };

    struct RawBranch {
        long from, to;
        double r_ohm, x_ohm;
        double i_max_ka = -1.0;
        int line;
    };
    std::vector<std::pair<long, std::pair<double, double>>> raw_buses;
    std::vector<RawBranch> raw_branches;
    std::vector<std::tuple<long, double, double, int>> raw_dg;
    std::vector<std::tuple<long, long, double>> i_max_overrides;
    long slack_id = -1;
    double v1 = 1.0, s_base = -1.0, v_base = -1.0;
    double v_min = -1.0, v_max = -1.0, i_max_default = -1.0;

    std::string section;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') fail(lineno, "malformed section header");
            section = t.substr(1, t.size() - 2);
            continue;
        }
        auto tok = split_ws(t);
        try {
        if (section == "base") {
            if (tok.size() != 2) fail(lineno, "expected '<key> <value>' in [base]");
            if (tok[0] == "s_base_mva") s_base = parse_double(tok[1], "s_base_mva");
            else if (tok[0] == "v_base_kv") v_base = parse_double(tok[1], "v_base_kv");
            else fail(lineno, "unknown key '" + tok[0] + "' in [base]");
        } else if (section == "slack") {
            if (tok.size() != 2) fail(lineno, "expected '<key> <value>' in [slack]");
            if (tok[0] == "bus") slack_id = parse_long(tok[1], "slack bus");
            else if (tok[0] == "v1_pu") v1 = parse_double(tok[1], "v1_pu");
            else fail(lineno, "unknown key '" + tok[0] + "' in [slack]");
        } else if (section == "buses") {
            if (tok.size() != 3) fail(lineno, "expected '<id> <p_d_mw> <q_d_mvar>'");
            raw_buses.push_back({parse_long(tok[0], "bus id"),
                                 {parse_double(tok[1], "p_d_mw"), parse_double(tok[2], "q_d_mvar")}});
        } else if (section == "branches") {
            if (tok.size() != 4) fail(lineno, "expected '<from> <to> <r_ohm> <x_ohm>'");
            raw_branches.push_back({parse_long(tok[0], "from bus"), parse_long(tok[1], "to bus"),
                                    parse_double(tok[2], "r_ohm"), parse_double(tok[3], "x_ohm"),
                                    -1.0, lineno});
        } else if (section == "limits") {
            if (tok[0] == "branch") {
                if (tok.size() != 4) fail(lineno, "expected 'branch <from> <to> <i_max_ka>'");
                i_max_overrides.push_back({parse_long(tok[1], "from bus"),
                                           parse_long(tok[2], "to bus"),
                                           parse_double(tok[3], "i_max_ka")});
            } else {
                if (tok.size() != 2) fail(lineno, "expected '<key> <value>' in [limits]");
                if (tok[0] == "v_min_pu") v_min = parse_double(tok[1], "v_min_pu");
                else if (tok[0] == "v_max_pu") v_max = parse_double(tok[1], "v_max_pu");
                else if (tok[0] == "i_max_ka") i_max_default = parse_double(tok[1], "i_max_ka");
                else fail(lineno, "unknown key '" + tok[0] + "' in [limits]");
            }
        } else if (section == "dg") {
            if (tok.size() != 3) fail(lineno, "expected '<bus> <g_bar_mw> <phi>'");
            raw_dg.push_back({parse_long(tok[0], "dg bus"), parse_double(tok[1], "g_bar_mw"),
                              parse_double(tok[2], "phi"), lineno});
        } else {
            fail(lineno, section.empty() ? "content before any [section]"
                                         : "unknown section [" + section + "]");
        }
        } catch (const DataError& e) {
            std::string msg = e.what();
            if (msg.rfind(path + ":", 0) == 0) throw;
            fail(lineno, msg);
        }
    }

    if (s_base <= 0.0 || v_base <= 0.0) throw DataError(path + ": [base] section missing or invalid");
    if (raw_buses.empty()) throw DataError(path + ": no buses");
    if (slack_id < 0) throw DataError(path + ": [slack] section missing");
    if (v_min < 0.0 || v_max < 0.0) throw DataError(path + ": [limits] must set v_min_pu and v_max_pu");

    RadialNetwork net;
    net.s_base_mva = s_base;
    net.v_base_kv = v_base;
    net.v1 = v1;
    net.v_min = v_min;
    net.v_max = v_max;

    int n = static_cast<int>(raw_buses.size());
    net.p_demand.resize(n);
    net.q_demand.resize(n);
    std::vector<long> ids;
    for (int i = 0; i < n; ++i) {
        long id = raw_buses[i].first;
        if (std::find(ids.begin(), ids.end(), id) != ids.end())
            throw DataError(path + ": duplicate bus id " + std::to_string(id));
        ids.push_back(id);
        net.p_demand[i] = raw_buses[i].second.first / s_base;
        net.q_demand[i] = raw_buses[i].second.second / s_base;
    }
    net.bus_ids = ids;
    auto bus_index = [&](long id, int line) {
        auto it = std::find(ids.begin(), ids.end(), id);
        if (it == ids.end()) fail(line, "unknown bus id " + std::to_string(id));
        return static_cast<int>(it - ids.begin());
    };
    auto slack_it = std::find(ids.begin(), ids.end(), slack_id);
    if (slack_it == ids.end())
        throw DataError(path + ": slack bus " + std::to_string(slack_id) + " is not in [buses]");
    net.slack = static_cast<int>(slack_it - ids.begin());

    double z_base = v_base * v_base / s_base;
    double i_base = net.i_base_ka();
    for (const RawBranch& rb : raw_branches) {
        Branch br;
        br.from = bus_index(rb.from, rb.line);
        br.to = bus_index(rb.to, rb.line);
        br.r = rb.r_ohm / z_base;
        br.x = rb.x_ohm / z_base;
        double ika = i_max_default;
        for (auto& [f, t, v] : i_max_overrides)
            if ((f == rb.from && t == rb.to) || (f == rb.to && t == rb.from)) ika = v;
        if (ika <= 0.0)
            fail(rb.line, "no current limit for branch " + std::to_string(rb.from) + "-" +
                              std::to_string(rb.to) + " (set i_max_ka or a branch override)");
        br.i_max = ika / i_base;
        net.branches.push_back(br);
    }
    for (auto& [bus, g_mw, phi, ln] : raw_dg) {
        DgUnit u;
        u.bus = bus_index(bus, ln);
        u.g_bar = g_mw / s_base;
        u.phi = phi;
        if (u.bus == net.slack) fail(ln, "DG may not sit on the slack bus");
        if (u.g_bar < 0.0) fail(ln, "DG nominal power must be >= 0");
        net.dg.push_back(u);
    }

    net.validate();
    net.build_topology();
    return net;
}

}  // namespace jccs::grid
