#pragma once

#include "dtmpc/dab.hpp"
#include "dtmpc/modulation.hpp"
#include "dtmpc/netlist.hpp"
#include "dtmpc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace testing_support {

inline double max_rel_error(const dtmpc::Mat& a, const dtmpc::Mat& ref) {
    const double scale = ref.cwiseAbs().maxCoeff();
    const double diff = (a - ref).cwiseAbs().maxCoeff();
    return scale > 0.0 ? diff / scale : diff;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Compiled model of a switchless netlist (single empty switching state).
inline dtmpc::PiecewiseModel compile_switchless(const std::string& text) {
    return dtmpc::compile_model(dtmpc::parse_netlist(text), {dtmpc::SwitchState(0u, 0)});
}

inline dtmpc::PiecewiseModel dab_model(double load = 0.576) {
    const auto net = dtmpc::parse_netlist(dtmpc::default_dab_netlist()).with_value("RLOAD", load);
    return dtmpc::compile_model(net, dtmpc::reachable_states(dtmpc::default_dab_layout()));
}

/// Random ladder-like circuit: a source feeding a chain of nodes with random R/L/C
/// branches and switches, each switch bypassed by a resistor so that every switching
/// state stays well posed.
inline std::string random_circuit(std::mt19937_64& rng, int n_switches, int n_reactive) {
    std::uniform_real_distribution<double> val(0.5, 5.0);
    std::ostringstream os;
    os << ".gnd 0\nV1 n0 0 " << val(rng) * 10 << "\nRsrc n0 n1 " << val(rng) << "\n";
    int node = 1;
    int ids = 0;
    int reactive = 0;
    int sw = 0;
    const int segments = std::max(n_switches, n_reactive) + 1;
    for (int k = 0; k < segments; ++k) {
        const int a = node;
        const int b = node + 1;
        ++node;
        // series element from a to b
        if (reactive < n_reactive && (k % 2 == 0)) {
            os << "L" << ++ids << " n" << a << " n" << b << " " << val(rng) * 1e-3 << "\n";
            ++reactive;
        } else {
            os << "R" << ++ids << " n" << a << " n" << b << " " << val(rng) << "\n";
        }
        if (sw < n_switches) {
            os << "S" << ++ids << " n" << a << " n" << b << " gon=" << val(rng) * 100
               << " goff=" << val(rng) * 1e-3 << "\n";
            ++sw;
        }
        // shunt from b to ground
        if (reactive < n_reactive) {
            os << "C" << ++ids << " n" << b << " 0 " << val(rng) * 1e-4 << "\n";
            ++reactive;
        }
        os << "R" << ++ids << " n" << b << " 0 " << val(rng) * 10 << "\n";
    }
    return os.str();
}

inline std::vector<dtmpc::SwitchState> all_states(int n) {
    std::vector<dtmpc::SwitchState> out;
    for (std::uint32_t b = 0; b < (1u << n); ++b) out.emplace_back(b, n);
    return out;
}

}  // namespace testing_support
