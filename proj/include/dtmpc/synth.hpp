#pragma once

#include "dtmpc/core.hpp"
#include "dtmpc/netlist.hpp"
#include "dtmpc/switch_state.hpp"

#include <map>
#include <string>
#include <vector>

namespace dtmpc {

/// Switched-linear model of a netlist with every switch held at its off conductance.
///
/// Switch j is represented by an extra current injection w_j = K_jj * v_sw,j flowing
/// through it, where K(s)_jj = s_j * (g_on,j - g_off,j). With the switches' voltages
///
///     v_sw = E x + Fs w + Gu u
///
/// the closed-form state equations are
///
///     dx/dt = A0 x + Bu u + Bs w
///     A(s)  = A0 + M(s) K(s) E,     B(s) = Bu + M(s) K(s) Gu,
///     M(s)  = Bs (I - K(s) Fs)^-1.
struct BaseModel {
    Mat A0;  ///< m x m
    Mat Bu;  ///< m x p, independent sources
    Mat Bs;  ///< m x N, switch current injections
    Mat E;   ///< N x m, state to switch voltage
    Mat Fs;  ///< N x N, switch current to switch voltage
    Mat Gu;  ///< N x p, source to switch voltage
    Vec switch_gain;  ///< diagonal template: g_on - g_off per switch
    Vec input_values;  ///< nominal source values from the netlist
    std::vector<std::string> state_labels;
    std::vector<std::string> input_labels;
    std::vector<std::string> switch_ids;

    [[nodiscard]] int state_dim() const { return static_cast<int>(A0.rows()); }
    [[nodiscard]] int input_dim() const { return static_cast<int>(Bu.cols()); }
    [[nodiscard]] int switch_count() const { return static_cast<int>(switch_gain.size()); }

    /// Diagonal of K(s).
    [[nodiscard]] Vec gains(const SwitchState& s) const;
};

/// Builds the base model by modified nodal analysis. States are ordered inductor
/// currents first, then capacitor voltages, each in netlist order. Throws
/// TopologyError when the resistive companion network is singular (capacitor or
/// voltage-source loops, inductor or current-source cutsets, floating nodes).
BaseModel synthesize_base(const Netlist& net);

/// Direct re-synthesis with every switch stamped at its state-resolved conductance.
/// Independent of the increment machinery; used as an oracle.
struct DirectModel {
    Mat A;
    Mat B;
};
DirectModel synthesize_direct(const Netlist& net, const SwitchState& s);

/// Per-switching-state increment matrices M(s).
class IncrementLUT {
public:
    IncrementLUT() = default;

    [[nodiscard]] const std::vector<SwitchState>& reachable_states() const { return states_; }
    [[nodiscard]] bool contains(const SwitchState& s) const { return index_.count(s) > 0; }
    [[nodiscard]] const Mat& at(const SwitchState& s) const;
    [[nodiscard]] std::size_t size() const { return states_.size(); }

    void insert(const SwitchState& s, Mat m);

private:
    std::vector<SwitchState> states_;
    std::vector<Mat> entries_;
    std::map<SwitchState, std::size_t> index_;
};

/// Computes M(s) for each requested state. Duplicate states are stored once, in
/// first-request order. Throws NumericalError naming the state when I - K(s) Fs is
/// singular.
IncrementLUT precompute_lut(const BaseModel& base, const std::vector<SwitchState>& states);

/// Base model plus LUT; the compiled switched-linear model of a circuit.
class PiecewiseModel {
public:
    PiecewiseModel(BaseModel base, IncrementLUT lut);

    [[nodiscard]] const BaseModel& base() const { return base_; }
    [[nodiscard]] const IncrementLUT& lut() const { return lut_; }
    [[nodiscard]] int state_dim() const { return base_.state_dim(); }

    /// A0 + M(s) K(s) E with K applied as a column scaling of M.
    [[nodiscard]] Mat assemble_A(const SwitchState& s) const;
    /// Bu + M(s) K(s) Gu.
    [[nodiscard]] Mat assemble_B(const SwitchState& s) const;

    /// Cached assembled matrices for a LUT state.
    [[nodiscard]] const Mat& A(const SwitchState& s) const;
    [[nodiscard]] const Mat& B(const SwitchState& s) const;

private:
    [[nodiscard]] std::size_t slot(const SwitchState& s) const;

    BaseModel base_;
    IncrementLUT lut_;
    std::vector<Mat> a_cache_;
    std::vector<Mat> b_cache_;
};

/// parse -> synthesize -> LUT over the given states.
PiecewiseModel compile_model(const Netlist& net, const std::vector<SwitchState>& states);

}  // namespace dtmpc
