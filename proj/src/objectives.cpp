#include "dtmpc/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace dtmpc {

void CostSpec::validate() const {
    if (!(v_ref > 0.0)) throw InputError("v_ref must be positive");
    if (!(w_ipp >= 0.0 && w_zvs >= 0.0)) throw InputError("cost weights must be non-negative");
    if (!(gate_sharpness > 0.0)) throw InputError("gate_sharpness must be positive");
    if (!std::isfinite(gate_midpoint)) throw InputError("gate_midpoint must be finite");
    if (!(i_pp_norm > 0.0 && i_min > 0.0)) throw InputError("metric normalizers must be positive");
    if (output_index < 0 || current_index < 0) throw InputError("state indices must be non-negative");
}

CycleMetrics extract_metrics(const SwitchTimeline& timeline, const std::vector<Vec>& states,
                             const CostSpec& spec) {
    if (states.size() != timeline.events.size() + 1) {
        throw InputError("metrics need one state per event plus the cycle end");
    }
    const auto dim = states.front().size();
    if (spec.output_index >= dim || spec.current_index >= dim) {
        throw InputError("metric state index out of range");
    }
    CycleMetrics m;
    m.v_out = states.back()[spec.output_index];
    m.v_track_err = std::abs(m.v_out - spec.v_ref);
    double lo = states.front()[spec.current_index];
    double hi = lo;
    for (const auto& x : states) {
        const double i = x[spec.current_index];
        lo = std::min(lo, i);
        hi = std::max(hi, i);
        m.i_peak = std::max(m.i_peak, std::abs(i));
    }
    m.i_pp = hi - lo;
    for (std::size_t k = 0; k < timeline.events.size(); ++k) {
        for (const auto& tr : timeline.events[k].transitions) {
            const auto& leg = timeline.layout.legs[static_cast<std::size_t>(tr.leg)];
            const double into = leg.current_sign * states[k][leg.current_index];
            const double commutating = tr.rising ? into : -into;
            const double shortfall = std::max(0.0, spec.i_min - commutating);
            m.zvs_deficit += shortfall;
            if (shortfall == 0.0) ++m.zvs_satisfied;
            ++m.turn_on_events;
        }
    }
    return m;
}

double gate(double j_pri, const CostSpec& spec) {
    // 1 - logistic(z) = logistic(-z)
    const double z = spec.gate_sharpness * (j_pri - spec.gate_midpoint);
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(z));
}

double primary_cost(const CycleMetrics& m, const CostSpec& spec) {
    return m.v_track_err / spec.v_ref;
}

double gated_cost(double j_pri, double ipp_norm, double zvs_norm, const CostSpec& spec) {
    return j_pri + gate(j_pri, spec) * (spec.w_ipp * ipp_norm + spec.w_zvs * zvs_norm);
}

CostBreakdown cost_breakdown(const CycleMetrics& m, const CostSpec& spec) {
    CostBreakdown b;
    b.j_pri = primary_cost(m, spec);
    b.gate = gate(b.j_pri, spec);
    b.ipp_norm = m.i_pp / spec.i_pp_norm;
    b.zvs_norm = m.turn_on_events > 0 ? m.zvs_deficit / (m.turn_on_events * spec.i_min) : 0.0;
    b.total = gated_cost(b.j_pri, b.ipp_norm, b.zvs_norm, spec);
    return b;
}

double total_cost(const CycleMetrics& m, const CostSpec& spec) { return cost_breakdown(m, spec).total; }

}  // namespace dtmpc
