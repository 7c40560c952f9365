#pragma once

#include "dtmpc/core.hpp"
#include "dtmpc/switch_state.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dtmpc {

enum class Scheme { SPS, DPS, TPS };

std::string_view to_string(Scheme scheme);
Scheme scheme_from_string(std::string_view name);
/// Number of free phase-shift components: 1, 2 or 3.
int dimension(Scheme scheme);

/// Phase shifts as fractions of the half period.
///   d0: primary leg A to secondary leg C
///   d1: primary inner shift (0 = full square wave)
///   d2: secondary inner shift
struct PhaseShiftCommand {
    double d0 = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    Scheme scheme = Scheme::TPS;

    bool operator==(const PhaseShiftCommand&) const = default;
};

/// Projects a command onto a scheme's constraint set. Idempotent.
PhaseShiftCommand coerce_to_scheme(const PhaseShiftCommand& cmd, Scheme scheme);

/// Free components of a command (length = dimension(scheme)) and the inverse map.
Vec to_vector(const PhaseShiftCommand& cmd);
PhaseShiftCommand from_vector(const Vec& v, Scheme scheme);

/// Throws InputError when a component is outside [0,1] or the scheme constraints fail.
void validate(const PhaseShiftCommand& cmd);

/// One half-bridge leg. `current_index`/`current_sign` give the current flowing from
/// the AC side into the leg midpoint as sign * x[index]; it decides diode conduction
/// during dead time and the ZVS condition at turn-on.
struct LegSpec {
    std::string name;
    int top = 0;
    int bottom = 0;
    int current_index = 0;
    double current_sign = 1.0;
};

/// Legs A, B (primary) and C, D (secondary) mapped onto netlist switch indices.
struct BridgeLayout {
    std::array<LegSpec, 4> legs;
    int switch_count = 8;

    [[nodiscard]] SwitchState switches(std::uint8_t leg_levels, std::uint8_t dead_mask = 0) const;
};

/// S1..S8 in netlist order: A = (S1,S2), B = (S3,S4), C = (S5,S6), D = (S7,S8), with
/// the inductor current as state 0.
BridgeLayout default_dab_layout();

/// Every leg-level combination the modulator can produce (16 for four legs).
std::vector<SwitchState> reachable_states(const BridgeLayout& layout);

struct LegTransition {
    int leg = 0;
    bool rising = false;
};

struct SwitchEvent {
    double time = 0.0;      ///< seconds
    double fraction = 0.0;  ///< time / period, as computed before scaling
    std::uint8_t leg_levels = 0;  ///< bit l: leg l top switch commanded ON
    std::uint8_t dead_mask = 0;   ///< bit l: leg l inside its dead time (both OFF)
    SwitchState state;            ///< nominal switch pattern (dead legs both OFF)
    std::vector<LegTransition> transitions;
};

struct SwitchTimeline {
    double period = 0.0;
    double dead_time = 0.0;
    BridgeLayout layout;
    std::vector<SwitchEvent> events;

    /// Duration of segment i (from event i to the next event or the period end).
    [[nodiscard]] double segment_length(std::size_t i) const;
};

/// Coincident edges closer than this fraction of the period are merged.
inline constexpr double kEdgeMergeTolerance = 1e-12;

/// Builds the switching timeline of one period. Leg A rises at t = 0; leg B is the
/// complement of A delayed by d1*T/2; leg C lags A by d0*T/2; leg D is the complement
/// of A delayed by (d0 + d2)*T/2; all modulo T. Throws InputError for an invalid
/// command, period <= 0, or dead_time outside [0, T/8).
SwitchTimeline build_timeline(const PhaseShiftCommand& cmd, double period, double dead_time,
                              const BridgeLayout& layout = default_dab_layout());

/// Single-segment timeline holding one switching state for `duration` seconds.
SwitchTimeline constant_timeline(const SwitchState& s, double duration);

/// Switch pattern for a segment, with dead-time legs resolved to the conducting
/// anti-parallel diode from the sign of the leg current in `x`.
SwitchState resolve_state(const SwitchTimeline& timeline, const SwitchEvent& event, const Vec& x);

}  // namespace dtmpc
