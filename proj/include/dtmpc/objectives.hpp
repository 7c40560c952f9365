#pragma once

#include "dtmpc/core.hpp"
#include "dtmpc/modulation.hpp"

#include <vector>

namespace dtmpc {

struct CycleMetrics {
    double v_out = 0.0;        ///< V, output voltage at the cycle end
    double v_track_err = 0.0;  ///< V, |v_out - v_ref|
    double i_pp = 0.0;         ///< A, max - min of i_L over event samples
    double i_peak = 0.0;       ///< A, max |i_L| over event samples
    double zvs_deficit = 0.0;  ///< A, summed turn-on shortfall
    int turn_on_events = 0;    ///< leg transitions inspected for ZVS
    int zvs_satisfied = 0;     ///< turn-on events with zero shortfall
};

struct CostSpec {
    double v_ref = 24.0;
    double w_ipp = 0.001;
    double w_zvs = 0.001;
    double gate_midpoint = 0.04;
    double gate_sharpness = 100.0;
    double i_pp_norm = 62.5;  ///< A, rated power / minimum output voltage
    double i_min = 2.0;       ///< A, ZVS current threshold
    int output_index = 2;     ///< state index of the output capacitor voltage
    int current_index = 0;    ///< state index of the inductor current

    /// Throws InputError when a weight is negative or a scale is not positive.
    void validate() const;
};

/// Terms of the gated cost for one set of metrics.
struct CostBreakdown {
    double j_pri = 0.0;
    double gate = 0.0;
    double ipp_norm = 0.0;  ///< i_pp / i_pp_norm
    double zvs_norm = 0.0;  ///< zvs_deficit / (turn_on_events * i_min)
    double total = 0.0;
};

/// Metrics from the states at each event of `timeline` followed by the cycle-end
/// state. Every leg transition is a turn-on (top switch on a rising edge, bottom on
/// a falling edge); ZVS requires the leg current into the midpoint to exceed i_min on
/// a rising edge and to be below -i_min on a falling edge.
CycleMetrics extract_metrics(const SwitchTimeline& timeline, const std::vector<Vec>& states,
                             const CostSpec& spec);

/// Soft gate S = 1 - logistic(sharpness * (j_pri - midpoint)), evaluated without
/// overflow.
double gate(double j_pri, const CostSpec& spec);

/// Normalized tracking error |v_out - v_ref| / v_ref.
double primary_cost(const CycleMetrics& m, const CostSpec& spec);

CostBreakdown cost_breakdown(const CycleMetrics& m, const CostSpec& spec);

/// J = j_pri + S(j_pri) * (w_ipp * ipp_norm + w_zvs * zvs_norm).
double total_cost(const CycleMetrics& m, const CostSpec& spec);

/// Gated combination from pre-normalized terms.
double gated_cost(double j_pri, double ipp_norm, double zvs_norm, const CostSpec& spec);

}  // namespace dtmpc
