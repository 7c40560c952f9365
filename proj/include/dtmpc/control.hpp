#pragma once

#include "dtmpc/dab.hpp"
#include "dtmpc/objectives.hpp"
#include "dtmpc/optimizer.hpp"
#include "dtmpc/surrogate.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace dtmpc {

/// Piecewise-constant schedule: (first cycle, value) breakpoints sorted by cycle; the
/// first breakpoint must be at cycle 0.
using Schedule = std::vector<std::pair<int, double>>;

double schedule_value(const Schedule& s, int cycle);

struct Scenario {
    std::string name;
    int duration_cycles = 0;
    int step_cycle = 0;  ///< cycle of the disturbance (summary metrics count from here)
    Schedule v_ref;
    Schedule load;
    Vec initial_state;
    PhaseShiftCommand initial_command;  ///< steady-state command before the step

    void validate() const;
};

/// Ground-truth plant: event-driven cycles on the netlist model at the scheduled load.
class Plant {
public:
    Plant(ModelCache& cache, double period, double dead_time = 0.0);
    CyclePrediction advance(const Vec& x, const PhaseShiftCommand& cmd, double load);
    [[nodiscard]] double period() const { return period_; }
    [[nodiscard]] double dead_time() const { return dead_time_; }
    [[nodiscard]] ModelCache& cache() { return cache_; }

private:
    ModelCache& cache_;
    double period_;
    double dead_time_;
};

/// One ground-truth cycle: x_end of the event-driven solution.
Vec plant_advance(const PiecewiseModel& model, const Vec& x, const PhaseShiftCommand& cmd,
                  double period, double dead_time = 0.0);

/// Repeats a fixed command until ||x_end - x_start|| < tol. Throws NumericalError if
/// max_cycles is reached first.
Vec periodic_steady_state(const PiecewiseModel& model, const PhaseShiftCommand& cmd, Vec x0,
                          double period, double dead_time = 0.0, double tol = 1e-6,
                          int max_cycles = 200000);

/// Periodic steady state from the affine cycle map x -> Phi x + gamma (exact without
/// dead time), polished by fixed-point iteration to tol.
Vec solve_periodic_steady_state(const PiecewiseModel& model, const PhaseShiftCommand& cmd,
                                double period, double dead_time = 0.0, double tol = 1e-6);

/// SPS phase shift in [0, d0_max] whose steady-state output equals v_target (bisection),
/// with that steady state.
struct SteadyPoint {
    double d0 = 0.0;
    Vec state;
};
SteadyPoint sps_operating_point(const PiecewiseModel& model, double v_target, double period,
                                double dead_time = 0.0, double d0_max = 0.5, int output_index = 2);

class Controller {
public:
    virtual ~Controller() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    /// Called once with the pre-step operating point.
    virtual void reset(const PhaseShiftCommand& initial, double load) = 0;
    /// Command for the next cycle from the measured state at the cycle boundary.
    virtual PhaseShiftCommand step(const Vec& x_meas, double v_ref) = 0;
    /// Cost-function evaluations spent in the last step.
    [[nodiscard]] virtual int last_evaluations() const { return 0; }
};

struct PiGains {
    double kp = 0.0;  ///< per volt
    double ki = 0.0;  ///< per volt-second
};

/// SPS PI on the output voltage: d0 = clamp(kp e + integral), integral += ki e T,
/// with the integral advanced only as far as the output clamp and frozen beyond it.
class PiController final : public Controller {
public:
    PiController(PiGains gains, double period, double d0_min = 0.0, double d0_max = 0.5,
                 int output_index = 2);
    [[nodiscard]] std::string name() const override { return "PI"; }
    void reset(const PhaseShiftCommand& initial, double load) override;
    PhaseShiftCommand step(const Vec& x_meas, double v_ref) override;
    /// Output for a measured voltage (the core of step()).
    double update(double v_meas, double v_ref);

    [[nodiscard]] double integral() const { return integral_; }
    [[nodiscard]] double output() const { return output_; }
    [[nodiscard]] const PiGains& gains() const { return gains_; }

private:
    PiGains gains_;
    double period_;
    double d0_min_;
    double d0_max_;
    int output_index_;
    double integral_ = 0.0;
    double output_ = 0.0;
};

/// First-order-plus-dead-time fit of an open-loop SPS step and the resulting
/// SIMC PI gains (closed-loop time constant = dead time).
struct PiTuning {
    double process_gain = 0.0;  ///< V per unit d0
    double time_constant = 0.0;  ///< s
    double dead_time = 0.0;      ///< s
    PiGains gains;
};
PiTuning tune_pi_step_response(const PiecewiseModel& model, double v_op, double step_d0,
                               double period, double dead_time = 0.0, int output_index = 2);

struct MpcConfig {
    Scheme scheme = Scheme::TPS;
    SsoConfig sso;
    int iterations = 9;  ///< SSO iterations per control cycle
    bool estimate_load = true;
    std::string output_capacitor = "C2";
    double load_quantum = 0.01;  ///< relative grid of cached load estimates
    /// Upper bound of d0; the optimizer's first coordinate is scaled onto [0, d0_max].
    double d0_max = 0.5;

    void validate() const;
};

/// DT-MPC: warm-started SSO over one-cycle NSP predictions of the gated cost. The
/// load is tracked from the last measured cycle against the digital-twin model.
class DtMpcController final : public Controller {
public:
    DtMpcController(NspModel nsp, ModelCache& cache, CostSpec cost, MpcConfig cfg, double period);
    [[nodiscard]] std::string name() const override { return "DT-MPC"; }
    void reset(const PhaseShiftCommand& initial, double load) override;
    PhaseShiftCommand step(const Vec& x_meas, double v_ref) override;
    [[nodiscard]] int last_evaluations() const override { return last_evals_; }

    [[nodiscard]] const PhaseShiftCommand& previous_best() const { return previous_; }
    [[nodiscard]] double load_estimate() const { return load_; }
    [[nodiscard]] const OptimizeResult& last_result() const { return last_; }
    /// Gated cost of a command from a measured state, as seen by the optimizer.
    double predicted_cost(const Vec& x_meas, const PhaseShiftCommand& cmd, double v_ref) const;

private:
    void update_load(const Vec& x_meas);
    [[nodiscard]] PhaseShiftCommand to_command(const Vec& v) const;
    [[nodiscard]] Vec to_search(const PhaseShiftCommand& cmd) const;

    NspModel nsp_;
    ModelCache& cache_;
    CostSpec cost_;
    MpcConfig cfg_;
    double period_;
    double c_out_ = 0.0;
    double load_ = 1.0;
    PhaseShiftCommand previous_;
    bool have_last_ = false;
    Vec last_x_;
    PhaseShiftCommand last_cmd_;
    OptimizeResult last_;
    int last_evals_ = 0;
};

struct CycleRecord {
    int cycle = 0;
    PhaseShiftCommand cmd;
    Vec x_end;
    double v_ref = 0.0;
    double load = 0.0;
    CycleMetrics metrics;
    CostBreakdown cost;
    int evals = 0;
};

struct ScenarioSummary {
    int settling_cycles = 0;
    bool settled = false;
    double max_voltage_deviation = 0.0;  ///< V, after the step
    double max_i_L = 0.0;                ///< A, |i_L| at event samples after the step
    double i_pp_steady = 0.0;            ///< A, mean over the settled window
    int zvs_events_satisfied = 0;        ///< of the turn-on events in the last cycle
    int zvs_events_total = 0;
    double gate_post_step_max = 0.0;     ///< max gate over the 3 cycles after the step
    double gate_settled_fraction = 0.0;  ///< share of settled cycles with gate > 0.9
    int settled_window = 0;
};

struct ScenarioResult {
    std::string scenario;
    std::string controller;
    std::vector<CycleRecord> records;
    ScenarioSummary summary;
};

/// Settling band and run length used by the summary.
struct SettlingRule {
    double band = 0.02;  ///< fraction of v_ref
    int hold_cycles = 5;
    int post_step_cycles = 3;
};

/// Closed loop: the controller sees the plant state at every cycle boundary; metrics
/// and gated costs are evaluated on the ground-truth cycle with `cost`.
ScenarioResult run_scenario(Plant& plant, Controller& ctrl, const Scenario& sc, const CostSpec& cost,
                            const SettlingRule& rule = {});

ScenarioSummary summarize(const std::vector<CycleRecord>& records, int step_cycle, const CostSpec& cost,
                          const SettlingRule& rule = {});

/// Load step at constant v_ref (fractions of rated power, e.g. 1.0 -> 0.1).
Scenario load_step_scenario(ModelCache& cache, const DabParameters& p, double from_fraction,
                            double to_fraction, double v_ref, int pre_cycles, int post_cycles);

/// Reference step at constant load fraction.
Scenario voltage_step_scenario(ModelCache& cache, const DabParameters& p, double load_fraction,
                               double v_from, double v_to, int pre_cycles, int post_cycles);

/// "cycle,d0,d1,d2,iL,vC1,vC2,vref,load,J,Jpri,gate,ipp,zvs_def,evals"
void write_scenario_csv(std::ostream& os, const ScenarioResult& r);

}  // namespace dtmpc
