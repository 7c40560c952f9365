#include "dtmpc/control.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace dtmpc {

double schedule_value(const Schedule& s, int cycle) {
    if (s.empty()) throw InputError("empty schedule");
    double v = s.front().second;
    for (const auto& [c, value] : s) {
        if (c > cycle) break;
        v = value;
    }
    return v;
}

namespace {

void validate_schedule(const Schedule& s, const char* what, bool positive) {
    if (s.empty() || s.front().first != 0) {
        throw InputError(std::string(what) + " schedule must start at cycle 0");
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i > 0 && s[i].first <= s[i - 1].first) {
            throw InputError(std::string(what) + " schedule cycles must increase");
        }
        if (!std::isfinite(s[i].second) || (positive && !(s[i].second > 0.0))) {
            throw InputError(std::string(what) + " schedule values must be positive and finite");
        }
    }
}

bool all_finite(const Vec& x) { return x.allFinite(); }

}  // namespace

void Scenario::validate() const {
    if (duration_cycles < 0) throw InputError("duration_cycles must be non-negative");
    if (step_cycle < 0) throw InputError("step_cycle must be non-negative");
    validate_schedule(v_ref, "v_ref", true);
    validate_schedule(load, "load", true);
    if (initial_state.size() == 0 || !all_finite(initial_state)) {
        throw InputError("scenario initial state must be non-empty and finite");
    }
    dtmpc::validate(initial_command);
}

Plant::Plant(ModelCache& cache, double period, double dead_time)
    : cache_(cache), period_(period), dead_time_(dead_time) {
    if (!(period > 0.0)) throw InputError("plant period must be positive");
}

CyclePrediction Plant::advance(const Vec& x, const PhaseShiftCommand& cmd, double load) {
    if (!(load > 0.0)) throw InputError("plant load must be positive");
    const auto model = cache_.get(load);
    return simulate_cycle(*model, x, model->base().input_values, cmd, period_, dead_time_);
}

Vec plant_advance(const PiecewiseModel& model, const Vec& x, const PhaseShiftCommand& cmd,
                  double period, double dead_time) {
    return simulate_cycle(model, x, model.base().input_values, cmd, period, dead_time).x_end();
}

Vec periodic_steady_state(const PiecewiseModel& model, const PhaseShiftCommand& cmd, Vec x0,
                          double period, double dead_time, double tol, int max_cycles) {
    Vec x = std::move(x0);
    for (int k = 0; k < max_cycles; ++k) {
        const Vec next = plant_advance(model, x, cmd, period, dead_time);
        if (!all_finite(next)) throw NumericalError("steady-state iteration diverged");
        const double step = (next - x).norm();
        x = next;
        if (step < tol) return x;
    }
    throw NumericalError("no periodic steady state within " + std::to_string(max_cycles) + " cycles");
}

Vec solve_periodic_steady_state(const PiecewiseModel& model, const PhaseShiftCommand& cmd,
                                double period, double dead_time, double tol) {
    const int m = model.state_dim();
    const Vec zero = Vec::Zero(m);
    const Vec gamma = plant_advance(model, zero, cmd, period, dead_time);
    Mat phi(m, m);
    for (int i = 0; i < m; ++i) {
        phi.col(i) = plant_advance(model, Vec::Unit(m, i), cmd, period, dead_time) - gamma;
    }
    const Vec x = (Mat::Identity(m, m) - phi).fullPivLu().solve(gamma);
    if (!all_finite(x)) throw NumericalError("singular periodic steady-state system");
    return periodic_steady_state(model, cmd, x, period, dead_time, tol);
}

SteadyPoint sps_operating_point(const PiecewiseModel& model, double v_target, double period,
                                double dead_time, double d0_max, int output_index) {
    if (!(d0_max > 0.0 && d0_max <= 1.0)) throw InputError("d0_max must be in (0, 1]");
    auto at = [&](double d0) {
        return solve_periodic_steady_state(model, {d0, 0.0, 0.0, Scheme::SPS}, period, dead_time);
    };
    double lo = 0.0;
    double hi = d0_max;
    Vec x_hi = at(hi);
    if (x_hi[output_index] < v_target) {
        throw InputError("output voltage " + std::to_string(v_target) + " V is not reachable with SPS");
    }
    for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        Vec x = at(mid);
        if (x[output_index] < v_target) {
            lo = mid;
        } else {
            hi = mid;
            x_hi = std::move(x);
        }
    }
    return {hi, x_hi};
}

PiController::PiController(PiGains gains, double period, double d0_min, double d0_max, int output_index)
    : gains_(gains), period_(period), d0_min_(d0_min), d0_max_(d0_max), output_index_(output_index) {
    if (!(gains.kp >= 0.0 && gains.ki >= 0.0)) throw InputError("PI gains must be non-negative");
    if (!(period > 0.0)) throw InputError("PI period must be positive");
    if (!(d0_min >= 0.0 && d0_min < d0_max && d0_max <= 1.0)) throw InputError("invalid PI clamp");
}

void PiController::reset(const PhaseShiftCommand& initial, double /*load*/) {
    integral_ = std::clamp(initial.d0, d0_min_, d0_max_);
    output_ = integral_;
}

double PiController::update(double v_meas, double v_ref) {
    const double e = v_ref - v_meas;
    const double p = gains_.kp * e;
    const double candidate = integral_ + gains_.ki * e * period_;
    const double lo = std::min(integral_, candidate);
    const double hi = std::max(integral_, candidate);
    // Integrate only up to the point where the output reaches its clamp.
    if (p + candidate > d0_max_) {
        integral_ = std::clamp(d0_max_ - p, lo, hi);
    } else if (p + candidate < d0_min_) {
        integral_ = std::clamp(d0_min_ - p, lo, hi);
    } else {
        integral_ = candidate;
    }
    output_ = std::clamp(p + integral_, d0_min_, d0_max_);
    return output_;
}

PhaseShiftCommand PiController::step(const Vec& x_meas, double v_ref) {
    if (output_index_ >= x_meas.size()) throw InputError("PI output index out of range");
    return {update(x_meas[output_index_], v_ref), 0.0, 0.0, Scheme::SPS};
}

PiTuning tune_pi_step_response(const PiecewiseModel& model, double v_op, double step_d0, double period,
                               double dead_time, int output_index) {
    if (!(step_d0 > 0.0)) throw InputError("tuning step must be positive");
    const auto op = sps_operating_point(model, v_op, period, dead_time, 0.5, output_index);
    const PhaseShiftCommand stepped{std::min(op.d0 + step_d0, 0.5), 0.0, 0.0, Scheme::SPS};
    const double applied = stepped.d0 - op.d0;
    if (!(applied > 0.0)) throw InputError("operating point leaves no room for a tuning step");
    const Vec final_state = solve_periodic_steady_state(model, stepped, period, dead_time);
    const double dv = final_state[output_index] - v_op;

    PiTuning t;
    t.process_gain = dv / applied;
    t.dead_time = period;  // one-cycle sampling delay of the digital loop
    Vec x = op.state;
    const int limit = 1000000;
    for (int k = 1; k <= limit; ++k) {
        x = plant_advance(model, x, stepped, period, dead_time);
        if (x[output_index] - v_op >= 0.632 * dv) {
            t.time_constant = k * period;
            break;
        }
    }
    if (!(t.time_constant > 0.0)) throw NumericalError("step response did not reach 63.2%");
    const double tau_c = t.dead_time;
    const double kc = t.time_constant / (t.process_gain * (tau_c + t.dead_time));
    const double tau_i = std::min(t.time_constant, 4.0 * (tau_c + t.dead_time));
    t.gains = {kc, kc / tau_i};
    return t;
}

void MpcConfig::validate() const {
    sso.validate();
    if (iterations < 1) throw InputError("MPC iteration budget must be at least 1");
    if (!(load_quantum > 0.0 && load_quantum < 1.0)) throw InputError("load_quantum must be in (0, 1)");
    if (!(d0_max > 0.0 && d0_max <= 1.0)) throw InputError("MPC d0_max must be in (0, 1]");
}

DtMpcController::DtMpcController(NspModel nsp, ModelCache& cache, CostSpec cost, MpcConfig cfg, double period)
    : nsp_(std::move(nsp)), cache_(cache), cost_(cost), cfg_(std::move(cfg)), period_(period) {
    cost_.validate();
    cfg_.validate();
    if (!(period > 0.0)) throw InputError("MPC period must be positive");
    if (!nsp_.core_ptr()) throw InputError("MPC needs a surrogate with a core model");
    const auto* cap = cache_.netlist().find(cfg_.output_capacitor);
    if (cap == nullptr || cap->kind != BranchKind::Capacitor) {
        throw InputError("output capacitor '" + cfg_.output_capacitor + "' not found");
    }
    c_out_ = cap->value;
    load_ = cache_.nominal_load();
    previous_ = coerce_to_scheme({0.25, 0.25, 0.25, Scheme::TPS}, cfg_.scheme);
}

void DtMpcController::reset(const PhaseShiftCommand& initial, double load) {
    if (!(load > 0.0)) throw InputError("MPC load must be positive");
    previous_ = to_command(to_search(initial));
    have_last_ = false;
    const double q = std::log1p(cfg_.load_quantum);
    const double snapped = std::exp(std::round(std::log(load) / q) * q);
    load_ = snapped;
    nsp_ = nsp_.with_core(cache_.get(load_));
}

void DtMpcController::update_load(const Vec& x_meas) {
    if (!cfg_.estimate_load || !have_last_) return;
    const int k = cost_.output_index;
    const Vec& u = nsp_.core().base().input_values;
    const Vec predicted = predict_cycle(nsp_, last_x_, u, last_cmd_, period_).x_end();
    // End voltage sensitivity to load conductance: dv/dG = -T v / C.
    const double v_mean = 0.5 * (last_x_[k] + x_meas[k]);
    if (!(v_mean > 1e-3)) return;
    const double g = 1.0 / load_ - (x_meas[k] - predicted[k]) * c_out_ / (period_ * v_mean);
    const double g_min = 1.0 / (1e3 * cache_.nominal_load());
    const double r = 1.0 / std::max(g, g_min);
    const double q = std::log1p(cfg_.load_quantum);
    const double snapped = std::exp(std::round(std::log(r) / q) * q);
    if (snapped != load_) {
        load_ = snapped;
        nsp_ = nsp_.with_core(cache_.get(load_));
    }
}

PhaseShiftCommand DtMpcController::to_command(const Vec& v) const {
    Vec c = clamp_to_box(v);
    c[0] *= cfg_.d0_max;
    return from_vector(c, cfg_.scheme);
}

Vec DtMpcController::to_search(const PhaseShiftCommand& cmd) const {
    Vec v = to_vector(coerce_to_scheme(cmd, cfg_.scheme));
    v[0] = std::min(v[0] / cfg_.d0_max, 1.0);
    return v;
}

double DtMpcController::predicted_cost(const Vec& x_meas, const PhaseShiftCommand& cmd, double v_ref) const {
    CostSpec spec = cost_;
    spec.v_ref = v_ref;
    const auto pred = predict_cycle(nsp_, x_meas, nsp_.core().base().input_values, cmd, period_);
    return total_cost(extract_metrics(pred.timeline, pred.states, spec), spec);
}

PhaseShiftCommand DtMpcController::step(const Vec& x_meas, double v_ref) {
    if (x_meas.size() != nsp_.core().state_dim()) throw InputError("measured state has the wrong dimension");
    update_load(x_meas);
    auto cost = [&](const Vec& v) { return predicted_cost(x_meas, to_command(v), v_ref); };
    const int n = dimension(cfg_.scheme);
    OptimizeBudget budget;
    budget.max_iterations = cfg_.iterations;
    budget.max_cost_evals = cfg_.iterations * (n + 2) + (n + 1);
    last_ = optimize_sso(cost, to_search(previous_), cfg_.sso, budget);
    last_evals_ = last_.evaluations;
    previous_ = to_command(last_.best);
    last_x_ = x_meas;
    last_cmd_ = previous_;
    have_last_ = true;
    return previous_;
}

ScenarioSummary summarize(const std::vector<CycleRecord>& records, int step_cycle, const CostSpec& /*cost*/,
                          const SettlingRule& rule) {
    ScenarioSummary s;
    const int n = static_cast<int>(records.size());
    if (n == 0 || step_cycle >= n) return s;
    auto in_band = [&](const CycleRecord& r) {
        return std::abs(r.metrics.v_out - r.v_ref) <= rule.band * r.v_ref;
    };
    int settle = -1;
    for (int i = step_cycle; i + rule.hold_cycles <= n; ++i) {
        bool ok = true;
        for (int j = i; j < i + rule.hold_cycles && ok; ++j) ok = in_band(records[static_cast<std::size_t>(j)]);
        if (ok) {
            settle = i;
            break;
        }
    }
    s.settled = settle >= 0;
    s.settling_cycles = s.settled ? settle - step_cycle + 1 : n - step_cycle;
    for (int i = step_cycle; i < n; ++i) {
        const auto& r = records[static_cast<std::size_t>(i)];
        s.max_voltage_deviation = std::max(s.max_voltage_deviation, r.metrics.v_track_err);
        s.max_i_L = std::max(s.max_i_L, r.metrics.i_peak);
    }
    for (int i = step_cycle; i < std::min(n, step_cycle + rule.post_step_cycles); ++i) {
        s.gate_post_step_max = std::max(s.gate_post_step_max, records[static_cast<std::size_t>(i)].cost.gate);
    }
    if (s.settled) {
        double ipp = 0.0;
        int gated = 0;
        for (int i = settle; i < n; ++i) {
            const auto& r = records[static_cast<std::size_t>(i)];
            ipp += r.metrics.i_pp;
            if (r.cost.gate > 0.9) ++gated;
        }
        s.settled_window = n - settle;
        s.i_pp_steady = ipp / s.settled_window;
        s.gate_settled_fraction = static_cast<double>(gated) / s.settled_window;
    }
    s.zvs_events_satisfied = records.back().metrics.zvs_satisfied;
    s.zvs_events_total = records.back().metrics.turn_on_events;
    return s;
}

ScenarioResult run_scenario(Plant& plant, Controller& ctrl, const Scenario& sc, const CostSpec& cost,
                            const SettlingRule& rule) {
    sc.validate();
    cost.validate();
    ScenarioResult out;
    out.scenario = sc.name;
    out.controller = ctrl.name();
    Vec x = sc.initial_state;
    ctrl.reset(sc.initial_command, schedule_value(sc.load, 0));
    out.records.reserve(static_cast<std::size_t>(sc.duration_cycles));
    for (int c = 0; c < sc.duration_cycles; ++c) {
        CycleRecord r;
        r.cycle = c;
        r.v_ref = schedule_value(sc.v_ref, c);
        r.load = schedule_value(sc.load, c);
        r.cmd = ctrl.step(x, r.v_ref);
        r.evals = ctrl.last_evaluations();
        const auto cyc = plant.advance(x, r.cmd, r.load);
        CostSpec spec = cost;
        spec.v_ref = r.v_ref;
        r.metrics = extract_metrics(cyc.timeline, cyc.states, spec);
        r.cost = cost_breakdown(r.metrics, spec);
        r.x_end = cyc.x_end();
        if (!all_finite(r.x_end)) {
            throw NumericalError("plant state became non-finite in cycle " + std::to_string(c) + " of " + sc.name);
        }
        x = r.x_end;
        out.records.push_back(std::move(r));
    }
    out.summary = summarize(out.records, sc.step_cycle, cost, rule);
    return out;
}

Scenario load_step_scenario(ModelCache& cache, const DabParameters& p, double from_fraction, double to_fraction,
                            double v_ref, int pre_cycles, int post_cycles) {
    if (pre_cycles < 0 || post_cycles < 0) throw InputError("cycle counts must be non-negative");
    const double r0 = p.load_for_fraction(from_fraction);
    const double r1 = p.load_for_fraction(to_fraction);
    const auto op = sps_operating_point(*cache.get(r0), v_ref, p.period, p.dead_time);
    Scenario sc;
    sc.name = "load_step";
    sc.duration_cycles = pre_cycles + post_cycles;
    sc.step_cycle = pre_cycles;
    sc.v_ref = {{0, v_ref}};
    sc.load = {{0, r0}, {pre_cycles, r1}};
    if (pre_cycles == 0) sc.load = {{0, r1}};
    sc.initial_state = op.state;
    sc.initial_command = {op.d0, 0.0, 0.0, Scheme::SPS};
    return sc;
}

Scenario voltage_step_scenario(ModelCache& cache, const DabParameters& p, double load_fraction, double v_from,
                               double v_to, int pre_cycles, int post_cycles) {
    if (pre_cycles < 0 || post_cycles < 0) throw InputError("cycle counts must be non-negative");
    const double r = p.load_for_fraction(load_fraction);
    const auto op = sps_operating_point(*cache.get(r), v_from, p.period, p.dead_time);
    Scenario sc;
    sc.name = "voltage_step";
    sc.duration_cycles = pre_cycles + post_cycles;
    sc.step_cycle = pre_cycles;
    sc.v_ref = {{0, v_from}, {pre_cycles, v_to}};
    if (pre_cycles == 0) sc.v_ref = {{0, v_to}};
    sc.load = {{0, r}};
    sc.initial_state = op.state;
    sc.initial_command = {op.d0, 0.0, 0.0, Scheme::SPS};
    return sc;
}

void write_scenario_csv(std::ostream& os, const ScenarioResult& r) {
    os << "cycle,d0,d1,d2,iL,vC1,vC2,vref,load,J,Jpri,gate,ipp,zvs_def,evals\n";
    const auto old = os.precision(12);
    for (const auto& c : r.records) {
        os << c.cycle << ',' << c.cmd.d0 << ',' << c.cmd.d1 << ',' << c.cmd.d2;
        for (int i = 0; i < 3; ++i) os << ',' << (i < c.x_end.size() ? c.x_end[i] : 0.0);
        os << ',' << c.v_ref << ',' << c.load << ',' << c.cost.total << ',' << c.cost.j_pri << ','
           << c.cost.gate << ',' << c.metrics.i_pp << ',' << c.metrics.zvs_deficit << ',' << c.evals << '\n';
    }
    os.precision(old);
}

}  // namespace dtmpc
