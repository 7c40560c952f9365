#pragma once

#include "dtmpc/core.hpp"
#include "dtmpc/modulation.hpp"
#include "dtmpc/synth.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dtmpc {

enum class SolverKind { Euler, RK2, RK4, AdaptiveReference, EventDriven };

std::string_view to_string(SolverKind kind);
SolverKind solver_kind_from_string(std::string_view name);

struct SolverConfig {
    SolverKind kind = SolverKind::EventDriven;
    double fixed_step = 150e-9;  ///< seconds, fixed-step kinds
    double rel_tol = 1e-10;      ///< adaptive only
    double abs_tol = 1e-10;      ///< adaptive only

    void validate() const;
};

/// Sampled solution over one timeline. Row i holds the state at times[i] and the
/// switching state active on the interval that starts there.
struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<SwitchState> active;
    std::vector<std::size_t> event_index;  ///< rows that sit on timeline events
    int evaluations = 0;  ///< accepted steps / segment propagations
    int rejected = 0;     ///< adaptive only

    [[nodiscard]] const Vec& back() const { return states.back(); }
};

/// x + h (A x + B u)
Vec step_euler(const Mat& a, const Mat& b, const Vec& x, const Vec& u, double h);
/// Heun's method (explicit trapezoid).
Vec step_rk2(const Mat& a, const Mat& b, const Vec& x, const Vec& u, double h);
/// Classical fourth-order Runge-Kutta.
Vec step_rk4(const Mat& a, const Mat& b, const Vec& x, const Vec& u, double h);

/// Steps per segment for a fixed-step run: ceil(T/h) steps in total, shared between
/// segments in proportion to their length (largest remainder, at least one each), so
/// every segment is covered by equal sub-steps that end exactly on the next event.
std::vector<int> fixed_step_allocation(const SwitchTimeline& timeline, double h);

Trajectory integrate_fixed(const PiecewiseModel& model, const SwitchTimeline& timeline,
                           const Vec& x0, const Vec& u, const SolverConfig& config);

/// Dormand-Prince 5(4) with PI step-size control; steps are clipped to events.
Trajectory integrate_adaptive_reference(const PiecewiseModel& model,
                                        const SwitchTimeline& timeline, const Vec& x0,
                                        const Vec& u, double rel_tol, double abs_tol);

/// Exact LTI propagation per inter-event segment; one evaluation per segment.
Trajectory integrate_event_driven(const PiecewiseModel& model, const SwitchTimeline& timeline,
                                  const Vec& x0, const Vec& u);

/// Dispatches on config.kind.
Trajectory integrate(const PiecewiseModel& model, const SwitchTimeline& timeline, const Vec& x0,
                     const Vec& u, const SolverConfig& config);

/// CSV with header "t,<state_labels...>,state_bits", numbers printed with 17
/// significant digits. `t0` is added to every time stamp.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj,
                          const std::vector<std::string>& state_labels, double t0 = 0.0,
                          bool header = true);

}  // namespace dtmpc
