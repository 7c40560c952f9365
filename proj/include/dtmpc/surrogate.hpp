#pragma once

#include "dtmpc/core.hpp"
#include "dtmpc/dab.hpp"
#include "dtmpc/modulation.hpp"
#include "dtmpc/nn.hpp"
#include "dtmpc/synth.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace dtmpc {

/// Operating-condition grid for dataset generation. Commands are stratified: each
/// grid cell of the scheme's command cube contributes one uniformly jittered point.
struct DatasetConfig {
    int tps_points = 16;  ///< per axis, 3-D grid
    int dps_points = 32;  ///< per axis, 2-D grid
    int sps_points = 64;
    std::vector<double> loads = {0.576};  ///< ohms
    int draws_per_point = 4;  ///< random initial states per (command, load)
    Vec state_lo = Eigen::Vector3d(-250.0, 40.0, 0.0);
    Vec state_hi = Eigen::Vector3d(250.0, 50.0, 45.0);
    double period = 10e-6;
    double dead_time = 0.0;
    double rel_tol = 1e-10;
    double abs_tol = 1e-10;
    std::uint64_t seed = 1;

    [[nodiscard]] std::string fingerprint() const;
};

struct ResidualSample {
    SwitchState state;
    Vec x;
    Vec u;
    double h = 0.0;
    Vec residual;
    double load = 0.0;
    int cycle = 0;
};

struct ResidualDataset {
    std::vector<ResidualSample> samples;
    std::string provenance;
    int cycles = 0;
    int discarded_cycles = 0;
};

/// Returns the compiled model for a load resistance.
using ModelProvider = std::function<std::shared_ptr<const PiecewiseModel>(double load)>;

/// One sample per inter-event segment of each sampled cycle; the state is chained
/// along the adaptive reference solution within a cycle. Residual = reference end
/// state - one Euler step over the segment. Cycles whose integration fails are
/// dropped and counted.
ResidualDataset generate_dataset(const ModelProvider& models, const DatasetConfig& cfg);

/// Cycle list used by generate_dataset (command, load, initial state) for a config.
struct SampledCycle {
    PhaseShiftCommand cmd;
    double load = 0.0;
    Vec x0;
};
std::vector<SampledCycle> sample_cycles(const DatasetConfig& cfg);

/// Residual of a single segment from its inputs (reference minus Euler).
Vec segment_residual(const PiecewiseModel& model, const SwitchState& s, const Vec& x, const Vec& u,
                     double h, double rel_tol, double abs_tol);

struct TrainConfig {
    std::vector<int> layer_widths = {4, 32, 32, 3};
    AdamConfig adam;
    int epochs = 100;
    int batch_size = 256;
    double validation_fraction = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
};

/// One residual network with its own input/output normalization.
struct StateNet {
    FeedForwardNet net;
    Normalizer input_norm;
    Normalizer output_norm;
};

struct StateTrainReport {
    SwitchState state;
    int train_samples = 0;
    int validation_samples = 0;
    std::vector<double> epoch_loss;  ///< mean normalized training MSE per epoch
    double final_train_mse = 0.0;
    double validation_mse = 0.0;
};

struct TrainReport {
    std::vector<StateTrainReport> states;
    double final_train_mse = 0.0;  ///< sample-weighted over states
    double validation_mse = 0.0;
};

/// Neural surrogate predictor: Euler core on the compiled model plus per-state
/// residual networks on [x, h / step_reference]; the core can be swapped per load.
class NspModel {
public:
    NspModel() = default;
    NspModel(std::shared_ptr<const PiecewiseModel> core, std::vector<int> widths,
             double step_reference);

    [[nodiscard]] const PiecewiseModel& core() const { return *core_; }
    [[nodiscard]] std::shared_ptr<const PiecewiseModel> core_ptr() const { return core_; }
    /// Same networks on a different Euler core (e.g. a re-synthesized load).
    [[nodiscard]] NspModel with_core(std::shared_ptr<const PiecewiseModel> core) const;

    [[nodiscard]] const std::vector<int>& layer_widths() const { return widths_; }
    [[nodiscard]] double step_reference() const { return step_reference_; }
    [[nodiscard]] const std::map<SwitchState, StateNet>& nets() const { return nets_; }
    [[nodiscard]] bool has(const SwitchState& s) const { return nets_.count(s) > 0; }
    [[nodiscard]] const StateNet& net(const SwitchState& s) const;

    void set_net(const SwitchState& s, StateNet net);
    /// Zeroes every weight and bias (outputs become the output-norm mean, which is
    /// zeroed too), leaving a pure Euler predictor.
    void zero_networks();

    std::string provenance;

private:
    std::shared_ptr<const PiecewiseModel> core_;
    std::vector<int> widths_;
    double step_reference_ = 1.0;
    std::map<SwitchState, StateNet> nets_;
};

/// Trains one network per switching state present in the dataset. Throws
/// NumericalError if a loss becomes non-finite. States in `required` without
/// samples raise InputError.
NspModel train_nsp(const ResidualDataset& ds, const TrainConfig& cfg,
                   std::shared_ptr<const PiecewiseModel> core, TrainReport* report = nullptr,
                   const std::vector<SwitchState>& required = {});

/// Output scaling of the residual networks: the net predicts residual / (h/h_ref)^2,
/// since the Euler local error is second order in h.
double residual_scale(double h, double step_reference);

/// Euler step plus (h/h_ref)^2 times the denormalized network output.
Vec predict_segment(const NspModel& nsp, const Vec& x, const Vec& u, const SwitchState& s,
                    double h);

struct CyclePrediction {
    SwitchTimeline timeline;
    std::vector<Vec> states;  ///< state at each event, then the cycle end
    std::vector<SwitchState> active;
    int net_evaluations = 0;

    [[nodiscard]] const Vec& x_end() const { return states.back(); }
};

CyclePrediction predict_cycle(const NspModel& nsp, const Vec& x0, const Vec& u,
                              const PhaseShiftCommand& cmd, double period,
                              double dead_time = 0.0);

/// Chained forward Euler at the same event points (no residual correction).
CyclePrediction predict_cycle_euler(const PiecewiseModel& model, const Vec& x0, const Vec& u,
                                    const PhaseShiftCommand& cmd, double period,
                                    double dead_time = 0.0);

/// Exact event-driven cycle in the same shape, used as plant and as ground truth.
CyclePrediction simulate_cycle(const PiecewiseModel& model, const Vec& x0, const Vec& u,
                               const PhaseShiftCommand& cmd, double period,
                               double dead_time = 0.0);

}  // namespace dtmpc
