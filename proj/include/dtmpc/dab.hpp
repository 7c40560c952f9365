#pragma once

#include "dtmpc/modulation.hpp"
#include "dtmpc/netlist.hpp"
#include "dtmpc/synth.hpp"

#include <map>
#include <memory>
#include <string>
#include <string_view>

namespace dtmpc {

/// Operating parameters of the dual-active-bridge case.
struct DabParameters {
    double vin = 48.0;
    double period = 10e-6;
    double rated_power = 1000.0;  ///< W at v_rated
    double v_rated = 24.0;
    double v_min = 16.0;
    double v_max = 32.0;
    double dead_time = 0.0;
    std::string load_id = "RLOAD";

    /// Load resistance for a fraction of rated power at v_rated.
    [[nodiscard]] double load_for_fraction(double fraction) const {
        return v_rated * v_rated / (rated_power * fraction);
    }
};

/// Built-in DAB netlist (also shipped as data/dab.net).
std::string_view default_dab_netlist();

/// Compiled models of one netlist keyed by the value of its load element. Loads are
/// quantized to 1e-9 relative so that repeated lookups of the same schedule entry hit.
class ModelCache {
public:
    ModelCache(Netlist net, std::string load_id, BridgeLayout layout = default_dab_layout());

    [[nodiscard]] std::shared_ptr<const PiecewiseModel> get(double load_ohms);
    [[nodiscard]] const Netlist& netlist() const { return net_; }
    [[nodiscard]] const BridgeLayout& layout() const { return layout_; }
    [[nodiscard]] const std::string& load_id() const { return load_id_; }
    [[nodiscard]] double nominal_load() const;

private:
    Netlist net_;
    std::string load_id_;
    BridgeLayout layout_;
    std::map<long long, std::shared_ptr<const PiecewiseModel>> models_;
};

}  // namespace dtmpc
