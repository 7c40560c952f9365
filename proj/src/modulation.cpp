#include "dtmpc/modulation.hpp"

#include <algorithm>
#include <cmath>

namespace dtmpc {

std::string_view to_string(Scheme scheme) {
    switch (scheme) {
        case Scheme::SPS: return "SPS";
        case Scheme::DPS: return "DPS";
        case Scheme::TPS: return "TPS";
    }
    return "TPS";
}

Scheme scheme_from_string(std::string_view name) {
    if (name == "SPS" || name == "sps") return Scheme::SPS;
    if (name == "DPS" || name == "dps") return Scheme::DPS;
    if (name == "TPS" || name == "tps") return Scheme::TPS;
    throw InputError("unknown modulation scheme '" + std::string(name) + "'");
}

int dimension(Scheme scheme) {
    switch (scheme) {
        case Scheme::SPS: return 1;
        case Scheme::DPS: return 2;
        case Scheme::TPS: return 3;
    }
    return 3;
}

PhaseShiftCommand coerce_to_scheme(const PhaseShiftCommand& cmd, Scheme scheme) {
    PhaseShiftCommand out = cmd;
    out.scheme = scheme;
    switch (scheme) {
        case Scheme::SPS:
            out.d1 = 0.0;
            out.d2 = 0.0;
            break;
        case Scheme::DPS: {
            const double mean = 0.5 * (cmd.d1 + cmd.d2);
            out.d1 = mean;
            out.d2 = mean;
            break;
        }
        case Scheme::TPS: break;
    }
    return out;
}

Vec to_vector(const PhaseShiftCommand& cmd) {
    switch (cmd.scheme) {
        case Scheme::SPS: return Vec::Constant(1, cmd.d0);
        case Scheme::DPS: return Eigen::Vector2d(cmd.d0, cmd.d1);
        case Scheme::TPS: return Eigen::Vector3d(cmd.d0, cmd.d1, cmd.d2);
    }
    return {};
}

PhaseShiftCommand from_vector(const Vec& v, Scheme scheme) {
    if (v.size() != dimension(scheme)) throw InputError("command vector has wrong dimension");
    switch (scheme) {
        case Scheme::SPS: return {v[0], 0.0, 0.0, scheme};
        case Scheme::DPS: return {v[0], v[1], v[1], scheme};
        case Scheme::TPS: return {v[0], v[1], v[2], scheme};
    }
    return {};
}

void validate(const PhaseShiftCommand& cmd) {
    for (double d : {cmd.d0, cmd.d1, cmd.d2}) {
        if (!(d >= 0.0 && d <= 1.0)) {
            throw InputError("out-of-range command component " + std::to_string(d) +
                             " (must lie in [0,1])");
        }
    }
    if (cmd.scheme == Scheme::SPS && (cmd.d1 != 0.0 || cmd.d2 != 0.0)) {
        throw InputError("SPS command requires d1 = d2 = 0");
    }
    if (cmd.scheme == Scheme::DPS && cmd.d1 != cmd.d2) {
        throw InputError("DPS command requires d1 = d2");
    }
}

SwitchState BridgeLayout::switches(std::uint8_t leg_levels, std::uint8_t dead_mask) const {
    SwitchState s(0u, switch_count);
    for (int l = 0; l < 4; ++l) {
        if ((dead_mask >> l) & 1u) continue;
        const bool high = (leg_levels >> l) & 1u;
        s = s.with(legs[static_cast<std::size_t>(l)].top, high);
        s = s.with(legs[static_cast<std::size_t>(l)].bottom, !high);
    }
    return s;
}

BridgeLayout default_dab_layout() {
    // Current into each midpoint from the AC side, in terms of the inductor current
    // i_L flowing A -> inductor -> transformer primary -> B, and out of the secondary
    // dotted terminal into C.
    BridgeLayout layout;
    layout.legs = {LegSpec{"A", 0, 1, 0, -1.0}, LegSpec{"B", 2, 3, 0, +1.0},
                   LegSpec{"C", 4, 5, 0, +1.0}, LegSpec{"D", 6, 7, 0, -1.0}};
    layout.switch_count = 8;
    return layout;
}

std::vector<SwitchState> reachable_states(const BridgeLayout& layout) {
    std::vector<SwitchState> out;
    for (std::uint8_t levels = 0; levels < 16; ++levels) out.push_back(layout.switches(levels));
    return out;
}

double SwitchTimeline::segment_length(std::size_t i) const {
    const double end = (i + 1 < events.size()) ? events[i + 1].time : period;
    return end - events[i].time;
}

namespace {

double wrap(double f) {
    f -= std::floor(f);
    if (f >= 1.0 - kEdgeMergeTolerance) f = 0.0;
    return f;
}

/// Whether fraction b lies in the half-open window [start, start + len) modulo 1.
bool in_window(double b, double start, double len) {
    double d = b - start;
    d -= std::floor(d);
    if (d >= 1.0 - kEdgeMergeTolerance) d = 0.0;
    return d < len - 0.5 * kEdgeMergeTolerance;
}

struct Edge {
    double fraction;
    int leg;
    bool rising;
};

}  // namespace

SwitchTimeline build_timeline(const PhaseShiftCommand& cmd, double period, double dead_time,
                              const BridgeLayout& layout) {
    validate(cmd);
    if (!(period > 0.0)) throw InputError("period must be positive");
    if (!(dead_time >= 0.0 && dead_time < period / 8.0)) {
        throw InputError("dead time must lie in [0, period/8)");
    }

    // Rising-edge fractions of each leg's top switch; each leg is a 50% square wave.
    const std::array<double, 4> rise = {
        0.0,
        wrap(0.5 * (1.0 + cmd.d1)),
        wrap(0.5 * cmd.d0),
        wrap(0.5 * (1.0 + cmd.d0 + cmd.d2)),
    };
    std::vector<Edge> edges;
    for (int l = 0; l < 4; ++l) {
        edges.push_back({rise[static_cast<std::size_t>(l)], l, true});
        edges.push_back({wrap(rise[static_cast<std::size_t>(l)] + 0.5), l, false});
    }
    const double delta = dead_time / period;

    std::vector<double> bounds;
    for (const auto& e : edges) {
        bounds.push_back(e.fraction);
        if (delta > 0.0) bounds.push_back(wrap(e.fraction + delta));
    }
    std::sort(bounds.begin(), bounds.end());
    std::vector<double> merged;
    for (double b : bounds) {
        if (merged.empty() || b - merged.back() >= kEdgeMergeTolerance) merged.push_back(b);
    }

    SwitchTimeline tl;
    tl.period = period;
    tl.dead_time = dead_time;
    tl.layout = layout;
    for (double b : merged) {
        SwitchEvent ev;
        ev.fraction = b;
        ev.time = b * period;
        for (int l = 0; l < 4; ++l) {
            const double r = rise[static_cast<std::size_t>(l)];
            if (in_window(b, r, 0.5)) ev.leg_levels |= static_cast<std::uint8_t>(1u << l);
            if (delta > 0.0 && (in_window(b, r, delta) || in_window(b, wrap(r + 0.5), delta))) {
                ev.dead_mask |= static_cast<std::uint8_t>(1u << l);
            }
        }
        for (const auto& e : edges) {
            if (std::abs(e.fraction - b) < kEdgeMergeTolerance) {
                ev.transitions.push_back({e.leg, e.rising});
            }
        }
        ev.state = layout.switches(ev.leg_levels, ev.dead_mask);
        tl.events.push_back(std::move(ev));
    }
    return tl;
}

SwitchTimeline constant_timeline(const SwitchState& s, double duration) {
    if (!(duration > 0.0)) throw InputError("duration must be positive");
    SwitchTimeline tl;
    tl.period = duration;
    tl.layout.switch_count = s.size();
    SwitchEvent ev;
    ev.state = s;
    tl.events.push_back(ev);
    return tl;
}

SwitchState resolve_state(const SwitchTimeline& timeline, const SwitchEvent& event, const Vec& x) {
    if (event.dead_mask == 0) return event.state;
    std::uint8_t levels = event.leg_levels;
    for (int l = 0; l < 4; ++l) {
        if (!((event.dead_mask >> l) & 1u)) continue;
        const auto& leg = timeline.layout.legs[static_cast<std::size_t>(l)];
        const double into_midpoint = leg.current_sign * x[leg.current_index];
        // Positive current into the midpoint forward-biases the top diode.
        if (into_midpoint > 0.0) {
            levels |= static_cast<std::uint8_t>(1u << l);
        } else {
            levels &= static_cast<std::uint8_t>(~(1u << l));
        }
    }
    return timeline.layout.switches(levels);
}

}  // namespace dtmpc
