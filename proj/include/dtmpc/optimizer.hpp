#pragma once

#include "dtmpc/core.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace dtmpc {

/// Cost over the command box [0,1]^n.
using CostFunction = std::function<double(const Vec&)>;

struct OptimizeBudget {
    int max_cost_evals = 1000;
    int max_iterations = 1000;

    void validate() const;
};

/// One cost evaluation as recorded by an optimizer.
struct TraceEntry {
    int iter = 0;
    int eval = 0;  ///< 1-based cumulative evaluation index
    Vec u;
    double cost = 0.0;
    std::string phase;  ///< init, reflect, expand, contract, poll, shrink, grid
    double scale = 0.0;  ///< h_s (SSO) or lattice step (grid)
    double threshold = 0.0;  ///< SSO: J(U_0) - sigma h_s^2 in force when evaluated
    bool accepted = false;   ///< SSO: this point replaced the worst vertex
};

/// "iter,eval,U0..U{n-1},J,phase,scale,threshold,accepted"
void write_trace_csv(std::ostream& os, const std::vector<TraceEntry>& trace);

enum class Termination { Budget, Iterations, ScaleUnderflow };
std::string_view to_string(Termination t);

struct OptimizeResult {
    Vec best;
    double best_cost = 0.0;
    int evaluations = 0;
    int iterations = 0;
    Termination termination = Termination::Budget;
    std::vector<TraceEntry> trace;
    std::vector<double> best_history;  ///< best-ever cost after each iteration
};

/// e_1..e_n and -(1/sqrt n) sum e_i.
std::vector<Vec> positive_basis(int n);

/// Clamp each component to [0,1].
Vec clamp_to_box(const Vec& u);

struct SsoConfig {
    double sigma = 1e-4;
    double rho = 0.5;
    double initial_scale = 0.1;
    double min_scale = 1e-6;

    void validate() const;
};

/// Simplex search state (vertices sorted by cost, ties broken lexicographically).
struct Simplex {
    std::vector<Vec> vertices;
    std::vector<double> costs;
    double scale = 0.1;
    int poll_index = -1;  ///< next poll direction while polling, -1 otherwise
    int eval_count = 0;
    int iteration = 0;

    [[nodiscard]] int dim() const { return static_cast<int>(vertices.front().size()); }
    void sort();
};

/// Mean of all vertices except the last (worst).
Vec centroid(const Simplex& s);

/// Counts evaluations against a budget and records the trace. Throws
/// NumericalError on a non-finite cost.
class Evaluator {
public:
    Evaluator(CostFunction f, int max_evals, std::vector<TraceEntry>* trace);
    /// Returns false, without evaluating, when the budget is exhausted.
    bool evaluate(const Vec& u, int iter, const std::string& phase, double scale, double& cost);
    [[nodiscard]] int count() const { return count_; }
    [[nodiscard]] bool exhausted() const { return count_ >= max_; }
    TraceEntry* last();
    [[nodiscard]] std::size_t trace_size() const;
    TraceEntry* entry(std::size_t index);

private:
    CostFunction f_;
    int max_;
    int count_ = 0;
    std::vector<TraceEntry>* trace_;
};

/// Vertices U_0 + h e_i (stepping -h where +h leaves the box), evaluated and sorted.
/// Returns false if the budget ran out.
bool init_simplex(Simplex& s, const Vec& u0, double u0_cost, Evaluator& ev, const std::string& phase);

/// One iteration: reflection and expansion/contraction, candidate accepted under
/// sufficient decrease; otherwise one poll direction per call; when the last
/// direction fails, h_s <- rho h_s and the simplex is rebuilt around U_0. Returns
/// false if the budget ran out mid-step.
bool sso_step(Simplex& s, Evaluator& ev, const SsoConfig& cfg);

OptimizeResult optimize_sso(const CostFunction& f, const Vec& warm_start, const SsoConfig& cfg,
                            const OptimizeBudget& budget);

struct GridStepResult {
    Vec center;
    double center_cost = 0.0;
    double step = 0.0;
    int evals = 0;
    bool moved = false;
};

/// Evaluates the 3^n - 1 lattice neighbours of `center` at `step` (clamped to the
/// box); moves to the best one if it improves on center_cost, else halves the step.
/// `complete` is false when the budget cut the sweep short.
GridStepResult grid_search_step(Evaluator& ev, const Vec& center, double center_cost, double step,
                                int iter, bool& complete);

struct GridConfig {
    double initial_step = 0.1;
    double min_step = 1e-6;
};

OptimizeResult optimize_grid(const CostFunction& f, const Vec& start, const GridConfig& cfg,
                             const OptimizeBudget& budget);

struct AdaptiveGridConfig {
    double base_step = 0.02;
    double gain = 5.0;
    double threshold = 0.05;
    double max_step = 0.25;
    double min_step = 1e-6;
};

/// clamp(base * (1 + gain * max(0, J - threshold)), base, max_step).
double adaptive_step(const AdaptiveGridConfig& cfg, double base_step, double center_cost);

/// Grid search whose step follows adaptive_step; a failed sweep halves the base step.
OptimizeResult optimize_adaptive_grid(const CostFunction& f, const Vec& start,
                                      const AdaptiveGridConfig& cfg, const OptimizeBudget& budget);

}  // namespace dtmpc
