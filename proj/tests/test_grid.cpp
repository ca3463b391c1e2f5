#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "jccs/grid.hpp"
#include "jccs/rng.hpp"

using namespace jccs;
using grid::Injection;
using grid::RadialNetwork;
using Vec = Eigen::VectorXd;

namespace {

// Independent scalar oracle for a single-branch feeder: iterates the four
// DistFlow equations directly to a 1e-12 fixed point.
struct TwoBusOracle {
    double v2, isq, p_send, q_send, p_loss;
};
TwoBusOracle two_bus_fixed_point(double r, double x, double p_inj, double q_inj, double v1) {
    double isq = 0.0;
    double p = 0.0, q = 0.0;
    for (int k = 0; k < 10000; ++k) {
        p = -p_inj + r * isq;
        q = -q_inj + x * isq;
        double next = (p * p + q * q) / (v1 * v1);
        if (std::abs(next - isq) < 1e-12 * std::max(1.0, std::abs(next))) {
            isq = next;
            break;
        }
        isq = next;
    }
    p = -p_inj + r * isq;
    q = -q_inj + x * isq;
    double v2sq = v1 * v1 - 2.0 * (r * p + x * q) + (r * r + x * x) * isq;
    return {std::sqrt(v2sq), isq, p, q, r * isq};
}

RadialNetwork load33() { return grid::load_network(testutil::data_file("ieee33.net")); }

Injection zero_injection(const RadialNetwork& net) {
    Injection inj;
    inj.p = Vec::Zero(net.n_buses() - 1);
    inj.q = Vec::Zero(net.n_buses() - 1);
    return inj;
}

}  // namespace

TEST_CASE("network loader reads the 33-bus feeder") {
    RadialNetwork net = load33();
    CHECK(net.n_buses() == 33);
    CHECK(net.n_branches() == 32);
    CHECK(net.is_tree());
    CHECK(net.n_dg() == 2);
    CHECK(net.dg[0].phi == 0.0);
    CHECK(net.dg[0].g_bar == Catch::Approx(0.2));  // 2 MW on a 10 MVA base
    CHECK(net.p_demand.sum() == Catch::Approx(0.3715));
    CHECK(net.q_demand.sum() == Catch::Approx(0.2300));
    // I_base = 10 / (sqrt(3) * 12.66) kA
    CHECK(net.i_base_ka() == Catch::Approx(10.0 / (std::sqrt(3.0) * 12.66)).epsilon(1e-12));
}

TEST_CASE("loader reports line-numbered errors") {
    auto dir = testutil::scratch_dir();
    std::filesystem::create_directories(dir);
    auto path = dir + "/bad.net";
    {
        std::ofstream f(path);
        f << "[base]\ns_base_mva 10\nv_base_kv 12.66\n[slack]\nbus 1\n"
          << "[buses]\n1 0 0\n2 oops 0\n";
    }
    try {
        grid::load_network(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":8:") != std::string::npos);
    }
}

TEST_CASE("loader rejects non-tree networks") {
    auto dir = testutil::scratch_dir();
    std::filesystem::create_directories(dir);
    auto path = dir + "/cycle.net";
    {
        std::ofstream f(path);
        f << "[base]\ns_base_mva 10\nv_base_kv 12.66\n[slack]\nbus 1\nv1_pu 1.0\n"
          << "[buses]\n1 0 0\n2 1 0\n3 1 0\n"
          << "[branches]\n1 2 1 1\n2 3 1 1\n3 1 1 1\n"
          << "[limits]\nv_min_pu 0.9\nv_max_pu 1.1\ni_max_ka 1\n";
    }
    CHECK_THROWS_AS(grid::load_network(path), StructuralError);
}

TEST_CASE("actual_injection follows the DG model") {
    RadialNetwork net = load33();
    auto ns = net.non_slack();
    Vec lam = Vec::Zero(2), om = Vec::Zero(2);

    SECTION("lambda = 0 reduces to pure demand for any omega") {
        om << 0.4, -0.3;
        Injection inj = grid::actual_injection(net, lam, om);
        for (size_t k = 0; k < ns.size(); ++k) {
            CHECK(inj.p[k] == -net.p_demand[ns[k]]);
            CHECK(inj.q[k] == -net.q_demand[ns[k]]);
        }
    }
    SECTION("phi = 0 leaves reactive injection at demand for any lambda, omega") {
        lam << 0.7, 0.2;
        om << 0.1, -0.1;
        Injection inj = grid::actual_injection(net, lam, om);
        for (size_t k = 0; k < ns.size(); ++k)
            CHECK(inj.q[k] == Catch::Approx(-net.q_demand[ns[k]]));
    }
    SECTION("lambda = 1, omega = 0 adds the 2 MW rating in p.u.") {
        lam << 1.0, 1.0;
        Injection inj = grid::actual_injection(net, lam, om);
        int dg_bus = net.dg[0].bus;
        size_t k = 0;
        while (ns[k] != dg_bus) ++k;
        CHECK(inj.p[k] == Catch::Approx(-net.p_demand[dg_bus] + 2.0 / net.s_base_mva));
    }
    SECTION("argument and domain errors") {
        Vec bad1 = Vec::Zero(1);
        CHECK_THROWS_AS(grid::actual_injection(net, bad1, om), std::invalid_argument);
        lam << 1.2, 0.0;
        CHECK_THROWS_AS(grid::actual_injection(net, lam, om), std::domain_error);
    }
}

TEST_CASE("power flow: zero injection is flat") {
    RadialNetwork net = load33();
    auto sol = grid::solve_power_flow(net, zero_injection(net));
    REQUIRE(sol.converged);
    for (int b = 0; b < net.n_buses(); ++b) CHECK(sol.v[b] == Catch::Approx(net.v1));
    CHECK(sol.i.maxCoeff() == 0.0);
    CHECK(sol.p_loss == 0.0);
}

TEST_CASE("power flow matches the scalar fixed-point oracle on a 2-bus line") {
    auto net = testutil::two_bus(0.05, 0.05, 0.1, 0.0);
    Injection inj;
    inj.p = Vec::Constant(1, -0.1);
    inj.q = Vec::Zero(1);
    auto sol = grid::solve_power_flow(net, inj);
    REQUIRE(sol.converged);
    auto oracle = two_bus_fixed_point(0.05, 0.05, -0.1, 0.0, 1.0);
    CHECK(sol.v[1] == Catch::Approx(oracle.v2).margin(1e-8));
    CHECK(sol.i[0] == Catch::Approx(std::sqrt(oracle.isq)).margin(1e-8));
    CHECK(sol.p_loss == Catch::Approx(oracle.p_loss).margin(1e-10));
    CHECK(sol.flow_p[0] == Catch::Approx(oracle.p_send).margin(1e-10));
}

TEST_CASE("converged solutions certify the DistFlow residuals") {
    RadialNetwork net = load33();
    rng::Philox gen(42);
    for (int trial = 0; trial < 25; ++trial) {
        Injection inj = zero_injection(net);
        for (int k = 0; k < inj.p.size(); ++k) {
            inj.p[k] = gen.uniform(-0.06, 0.03);
            inj.q[k] = gen.uniform(-0.04, 0.02);
        }
        auto sol = grid::solve_power_flow(net, inj);
        REQUIRE(sol.converged);
        CHECK(sol.residual <= 1e-6);
        CHECK(sol.v.minCoeff() >= 0.0);
        CHECK(sol.i.minCoeff() >= 0.0);
        if (sol.i.maxCoeff() > 0.0) CHECK(sol.p_loss > 0.0);
    }
}

TEST_CASE("voltage collapse returns a non-converged result, not a crash") {
    auto net = testutil::two_bus(0.3, 0.3, 8.0, 4.0);
    Injection inj;
    inj.p = Vec::Constant(1, -8.0);
    inj.q = Vec::Constant(1, -4.0);
    auto sol = grid::solve_power_flow(net, inj);
    CHECK_FALSE(sol.converged);
    CHECK_THROWS_AS(grid::max_violation(sol, net), std::domain_error);
}

TEST_CASE("max violation: flat no-load case") {
    RadialNetwork net = load33();
    auto sol = grid::solve_power_flow(net, zero_injection(net));
    CHECK(grid::max_violation(sol, net) == Catch::Approx(-0.1));
}

TEST_CASE("max violation: single binding component") {
    RadialNetwork net = load33();
    grid::PowerFlowSolution sol;
    sol.converged = true;
    sol.v = Vec::Constant(net.n_buses(), 1.0);
    sol.v[7] = 1.15;
    sol.i = Vec::Zero(net.n_branches());
    CHECK(grid::max_violation(sol, net) == Catch::Approx(0.05));
}

TEST_CASE("max violation agrees with exhaustive enumeration") {
    RadialNetwork net = load33();
    rng::Philox gen(7);
    for (int trial = 0; trial < 20; ++trial) {
        Injection inj = zero_injection(net);
        for (int k = 0; k < inj.p.size(); ++k) {
            inj.p[k] = gen.uniform(-0.05, 0.05);
            inj.q[k] = gen.uniform(-0.03, 0.03);
        }
        auto sol = grid::solve_power_flow(net, inj);
        REQUIRE(sol.converged);
        double h = grid::max_violation(sol, net);
        // brute force over every bus and branch residual
        double want = -1e300;
        for (int b = 0; b < net.n_buses(); ++b) {
            want = std::max(want, (net.v_min - sol.v[b]) / 1.0);
            want = std::max(want, (sol.v[b] - net.v_max) / 1.0);
        }
        for (int e = 0; e < net.n_branches(); ++e)
            want = std::max(want, (sol.i[e] - net.branches[e].i_max) / net.branches[e].i_max);
        CHECK(h == want);
        // sign equivalence with the raw limits
        bool all_ok = true;
        for (int b = 0; b < net.n_buses(); ++b)
            all_ok = all_ok && sol.v[b] >= net.v_min && sol.v[b] <= net.v_max;
        for (int e = 0; e < net.n_branches(); ++e)
            all_ok = all_ok && sol.i[e] <= net.branches[e].i_max;
        CHECK((h <= 0.0) == all_ok);
    }
}

TEST_CASE("energy purchase equals demand plus loss minus DG") {
    SECTION("lossless toy line with DG off") {
        auto net = testutil::two_bus(0.0, 0.05, 0.2, 0.1);
        Injection inj;
        inj.p = Vec::Constant(1, -0.2);
        inj.q = Vec::Constant(1, -0.1);
        auto sol = grid::solve_power_flow(net, inj);
        REQUIRE(sol.converged);
        double g = grid::energy_purchase(net, Vec{}, Vec{}, sol);
        CHECK(g == Catch::Approx(0.2).margin(1e-9));
    }
    SECTION("2-bus case agrees with the scalar oracle") {
        auto net = testutil::two_bus(0.05, 0.05, 0.1, 0.0);
        Injection inj;
        inj.p = Vec::Constant(1, -0.1);
        inj.q = Vec::Zero(1);
        auto sol = grid::solve_power_flow(net, inj);
        auto oracle = two_bus_fixed_point(0.05, 0.05, -0.1, 0.0, 1.0);
        double g = grid::energy_purchase(net, Vec{}, Vec{}, sol);
        CHECK(g == Catch::Approx(0.1 + oracle.p_loss).margin(1e-9));
    }
    SECTION("33-bus cross-check against the slack injection") {
        RadialNetwork net = load33();
        Vec lam(2), om(2);
        lam << 0.6, 0.8;
        om << 0.05, -0.1;
        auto sol = grid::solve_power_flow(net, grid::actual_injection(net, lam, om));
        REQUIRE(sol.converged);
        double g = grid::energy_purchase(net, lam, om, sol);
        double slack_inj = 0.0;
        for (int ce : net.child_branches[net.slack]) slack_inj += sol.flow_p[ce];
        CHECK(std::abs(g - slack_inj) <= 1e-6);
    }
}

TEST_CASE("lindistflow: no-load point and single-branch closed form") {
    auto net = testutil::two_bus(0.04, 0.02, 0.0, 0.0);
    auto lin = grid::lindistflow(net);
    Vec z = Vec::Zero(1);
    CHECK(lin.voltage_sq(z, z)[1] == Catch::Approx(1.0));

    Vec p = Vec::Constant(1, -0.3), q = Vec::Constant(1, -0.15);
    // V2^2 = V1^2 - 2(rP + xQ) with P = -p, Q = -q
    CHECK(lin.branch_p(p)[0] == Catch::Approx(0.3));
    CHECK(lin.branch_q(q)[0] == Catch::Approx(0.15));
    CHECK(lin.voltage_sq(p, q)[1] ==
          Catch::Approx(1.0 - 2.0 * (0.04 * 0.3 + 0.02 * 0.15)));
}

TEST_CASE("lindistflow matches AC in the small-signal limit") {
    RadialNetwork net = load33();
    auto lin = grid::lindistflow(net);
    rng::Philox gen(11);
    Injection inj = zero_injection(net);
    for (int k = 0; k < inj.p.size(); ++k) {
        inj.p[k] = gen.uniform(-1e-4, 1e-4);
        inj.q[k] = gen.uniform(-1e-4, 1e-4);
    }
    auto sol = grid::solve_power_flow(net, inj);
    REQUIRE(sol.converged);
    Vec vsq = lin.voltage_sq(inj.p, inj.q);
    for (int b = 0; b < net.n_buses(); ++b)
        CHECK(std::abs(std::sqrt(vsq[b]) - sol.v[b]) <= 1e-5);
}

TEST_CASE("lindistflow overestimates AC voltages on sampled operating points") {
    RadialNetwork net = load33();
    auto lin = grid::lindistflow(net);
    rng::Philox gen(137);
    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        Vec lam(2), om(2);
        lam << gen.next_double(), gen.next_double();
        om << gen.normal(0.0, 0.1), gen.normal(0.0, 0.1);
        if (om.minCoeff() <= -1.0) continue;
        double scale = gen.uniform(0.6, 1.4);
        Vec pd = net.p_demand * scale, qd = net.q_demand * scale;
        auto inj = grid::actual_injection_with_demand(net, pd, qd, lam, om);
        auto sol = grid::solve_power_flow(net, inj);
        if (!sol.converged) continue;
        ++checked;
        Vec vsq = lin.voltage_sq(inj.p, inj.q);
        for (int b = 0; b < net.n_buses(); ++b)
            REQUIRE(std::sqrt(std::max(0.0, vsq[b])) >= sol.v[b] - 1e-9);
    }
    CHECK(checked >= 900);
}
