#pragma once

#include <string>

#include "jccs/grid.hpp"
#include "jccs/rng.hpp"

namespace testutil {

inline std::string source_dir() { return JCCS_SOURCE_DIR; }
inline std::string data_file(const std::string& name) {
    return source_dir() + "/data/" + name;
}
inline std::string scratch_dir() { return std::string(JCCS_BINARY_DIR) + "/scratch"; }

// Two-bus feeder built directly in p.u. (bypasses the file loader so tests can
// use edge-case parameters like r = 0).
inline jccs::grid::RadialNetwork two_bus(double r, double x, double p_d, double q_d,
                                         double i_max = 10.0) {
    jccs::grid::RadialNetwork net;
    net.bus_ids = {1, 2};
    net.p_demand.resize(2);
    net.q_demand.resize(2);
    net.p_demand << 0.0, p_d;
    net.q_demand << 0.0, q_d;
    net.branches.push_back({0, 1, r, x, i_max});
    net.slack = 0;
    net.v1 = 1.0;
    net.v_min = 0.9;
    net.v_max = 1.1;
    net.build_topology();
    return net;
}

}  // namespace testutil
