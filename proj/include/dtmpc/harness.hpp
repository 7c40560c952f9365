#pragma once

#include "dtmpc/control.hpp"
#include "dtmpc/dab.hpp"
#include "dtmpc/objectives.hpp"
#include "dtmpc/optimizer.hpp"
#include "dtmpc/solver.hpp"
#include "dtmpc/surrogate.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dtmpc {

/// Version of the harness configuration schema.
inline constexpr int kConfigVersion = 1;

struct SimulateConfig {
    PhaseShiftCommand command{0.3, 0.2, 0.1, Scheme::TPS};
    int cycles = 5;
    double load = 0.576;
    Vec initial_state = Eigen::Vector3d(0.0, 48.0, 0.0);
    SolverConfig solver;
};

struct EvalNspConfig {
    int cycles = 500;           ///< random single cycles for the per-cycle error ratio
    int rollout_cycles = 1000;  ///< open-loop rollout length
    PhaseShiftCommand rollout_command{0.2, 0.1, 0.15, Scheme::TPS};
    double rollout_load = 0.576;
    Vec rollout_state = Eigen::Vector3d(0.0, 48.0, 0.0);
};

struct SolverBenchConfig {
    int cycles = 20;  ///< random (state, TPS command) cycles
    double euler_step = 50e-9;
    double rk2_step = 75e-9;
    double rk4_step = 150e-9;
    double load = 0.576;
    int timing_repeats = 20;
};

struct OptimizerBenchConfig {
    std::vector<Scheme> schemes = {Scheme::SPS, Scheme::DPS, Scheme::TPS};
    double start = 0.25;            ///< every coordinate of the common start point
    double operating_voltage = 24;  ///< state = SPS steady state at this voltage ...
    double load_fraction = 1.0;     ///< ... and this fraction of rated power
    double v_ref = 24.0;
    OptimizeBudget budget{300, 300};
    GridConfig grid;
    AdaptiveGridConfig adaptive;
    double target_tolerance = 0.01;  ///< relative distance to the best cost found
};

/// One closed-loop scenario: a load step (fractions `from` -> `to` at `v_ref`) or a
/// voltage step (volts `from` -> `to` at `load_fraction`).
struct ScenarioSpec {
    std::string kind = "load_step";
    double from = 1.0;
    double to = 0.1;
    double v_ref = 24.0;
    double load_fraction = 0.3;
    int pre_cycles = 5;
    int post_cycles = 300;
};

struct HarnessConfig {
    int version = kConfigVersion;
    std::uint64_t seed = 1;
    std::filesystem::path netlist;  ///< empty: built-in DAB netlist
    std::filesystem::path output_dir = "out";
    std::string load_id = "RLOAD";
    DabParameters dab;
    SimulateConfig simulate;
    DatasetConfig dataset;
    TrainConfig train;
    EvalNspConfig eval;
    SolverBenchConfig bench_solvers;
    OptimizerBenchConfig bench_optimizers;
    CostSpec cost;
    PiGains pi{0.13725, 1715.63};
    MpcConfig mpc;
    SettlingRule settling;
    std::vector<ScenarioSpec> scenarios = {
        {"load_step", 1.0, 0.1, 24.0, 0.3, 5, 300},
        {"voltage_step", 16.0, 32.0, 24.0, 0.3, 5, 300},
    };

    /// Propagates the seed to every stochastic stage.
    void set_seed(std::uint64_t s);
    void validate() const;
};

/// Parses a configuration document; relative paths are resolved against base_dir.
/// Keys absent from the document keep their defaults; unknown keys are rejected.
HarnessConfig config_from_json(std::string_view text, const std::filesystem::path& base_dir = {});
std::string config_to_json(const HarnessConfig& cfg);
HarnessConfig load_config(const std::filesystem::path& path);

struct SolverBenchRow {
    std::string name;
    double points_per_cycle = 0.0;
    double max_abs_error = 0.0;  ///< max over cycles and event points of |x - x_ref|_inf
    double max_rel_error = 0.0;  ///< max_abs_error / max |x_ref|_inf
    double wall_ratio = 0.0;     ///< wall time relative to rk4
};

struct SolverBenchResult {
    std::vector<SolverBenchRow> rows;
};

struct OptimizerBenchRow {
    Scheme scheme = Scheme::TPS;
    std::string method;
    int evaluations = 0;
    int iterations = 0;
    double final_cost = 0.0;
    int evals_to_target = -1;  ///< -1: target not reached
    int max_evals_per_iteration = 0;
    double mean_evals_per_iteration = 0.0;
    std::string trace_csv;
};

struct OptimizerBenchResult {
    std::vector<OptimizerBenchRow> rows;
    std::vector<std::pair<Scheme, double>> best_cost;  ///< best over methods per scheme
};

struct NspEvalResult {
    double cycle_ratio_rms = 0.0;  ///< RMS NSP error / RMS chained-Euler error
    double cycle_ratio_mean = 0.0;
    double cycle_ratio_worst = 0.0;
    double rollout_error = 0.0;        ///< max over signals, fraction of range
    double rollout_euler_error = 0.0;  ///< fraction of range, inf if it diverged
    Vec rollout_range;
};

/// Pipeline context: configuration, compiled models and the output directory.
class Harness {
public:
    explicit Harness(HarnessConfig cfg);

    [[nodiscard]] const HarnessConfig& config() const { return cfg_; }
    [[nodiscard]] ModelCache& cache() { return *cache_; }
    [[nodiscard]] std::filesystem::path out(const std::string& name) const { return cfg_.output_dir / name; }

    /// model.json, and timeline.json when a command is given.
    std::filesystem::path synth(const std::optional<PhaseShiftCommand>& timeline_command = {});
    /// simulate.csv over the configured cycles.
    std::filesystem::path simulate();
    /// nsp.json and train_report.json (dataset.csv if requested).
    TrainReport train_nsp(bool save_dataset = false);
    /// Loads nsp.json; MissingArtifactError with a hint if absent.
    [[nodiscard]] NspModel load_nsp() const;
    NspEvalResult eval_nsp();
    SolverBenchResult bench_solvers();
    OptimizerBenchResult bench_optimizers();
    std::vector<ScenarioResult> run_scenarios();
    /// report.json and report.md from the section files; MissingArtifactError if a
    /// section has not been produced.
    std::filesystem::path report();

    /// NSP-backed gated cost over the search box for a scheme at the benchmark state.
    [[nodiscard]] CostFunction benchmark_cost(const NspModel& nsp, Scheme scheme);

private:
    HarnessConfig cfg_;
    std::unique_ptr<ModelCache> cache_;
};

/// Evaluations until the best-so-far cost is within `tol` (relative) of `target`;
/// -1 if never.
int evals_to_target(const std::vector<TraceEntry>& trace, double target, double tol);

}  // namespace dtmpc
