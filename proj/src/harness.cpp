#include "dtmpc/harness.hpp"

#include "dtmpc/serialize.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace dtmpc {

using Json = nlohmann::json;

namespace {

// ---- config (de)serialization ------------------------------------------------

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw InputError("config section '" + where + "' must be an object");
    for (const auto& [k, v] : j.items()) {
        if (allowed.count(k) == 0) throw InputError("unknown config key '" + where + "." + k + "'");
    }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw InputError(std::string("config key '") + key + "': " + e.what());
    }
}

Json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void read_vec(const Json& j, const char* key, Vec& out) {
    if (!j.contains(key)) return;
    std::vector<double> v;
    read(j, key, v);
    out = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json command_json(const PhaseShiftCommand& c) {
    return {{"d0", c.d0}, {"d1", c.d1}, {"d2", c.d2}, {"scheme", std::string(to_string(c.scheme))}};
}

void read_command(const Json& j, const char* key, PhaseShiftCommand& c) {
    if (!j.contains(key)) return;
    const auto& s = j.at(key);
    check_keys(s, {"d0", "d1", "d2", "scheme"}, key);
    read(s, "d0", c.d0);
    read(s, "d1", c.d1);
    read(s, "d2", c.d2);
    if (s.contains("scheme")) c.scheme = scheme_from_string(s.at("scheme").get<std::string>());
}

Json to_json(const HarnessConfig& c) {
    Json j;
    j["version"] = c.version;
    j["seed"] = c.seed;
    j["netlist"] = c.netlist.generic_string();
    j["output_dir"] = c.output_dir.generic_string();
    j["load_id"] = c.load_id;
    j["dab"] = {{"vin", c.dab.vin},
                {"period", c.dab.period},
                {"rated_power", c.dab.rated_power},
                {"v_rated", c.dab.v_rated},
                {"v_min", c.dab.v_min},
                {"v_max", c.dab.v_max},
                {"dead_time", c.dab.dead_time}};
    j["simulate"] = {{"command", command_json(c.simulate.command)},
                     {"cycles", c.simulate.cycles},
                     {"load", c.simulate.load},
                     {"initial_state", vec_json(c.simulate.initial_state)},
                     {"solver", std::string(to_string(c.simulate.solver.kind))},
                     {"fixed_step", c.simulate.solver.fixed_step},
                     {"rel_tol", c.simulate.solver.rel_tol},
                     {"abs_tol", c.simulate.solver.abs_tol}};
    const auto& d = c.dataset;
    j["dataset"] = {{"tps_points", d.tps_points},     {"dps_points", d.dps_points},
                    {"sps_points", d.sps_points},     {"loads", d.loads},
                    {"draws_per_point", d.draws_per_point}, {"state_lo", vec_json(d.state_lo)},
                    {"state_hi", vec_json(d.state_hi)}, {"rel_tol", d.rel_tol},
                    {"abs_tol", d.abs_tol}};
    const auto& t = c.train;
    j["train"] = {{"layer_widths", t.layer_widths},
                  {"learning_rate", t.adam.learning_rate},
                  {"beta1", t.adam.beta1},
                  {"beta2", t.adam.beta2},
                  {"epsilon", t.adam.epsilon},
                  {"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"validation_fraction", t.validation_fraction}};
    j["eval"] = {{"cycles", c.eval.cycles},
                 {"rollout_cycles", c.eval.rollout_cycles},
                 {"rollout_command", command_json(c.eval.rollout_command)},
                 {"rollout_load", c.eval.rollout_load},
                 {"rollout_state", vec_json(c.eval.rollout_state)}};
    j["bench_solvers"] = {{"cycles", c.bench_solvers.cycles},
                          {"euler_step", c.bench_solvers.euler_step},
                          {"rk2_step", c.bench_solvers.rk2_step},
                          {"rk4_step", c.bench_solvers.rk4_step},
                          {"load", c.bench_solvers.load},
                          {"timing_repeats", c.bench_solvers.timing_repeats}};
    const auto& o = c.bench_optimizers;
    Json schemes = Json::array();
    for (auto s : o.schemes) schemes.push_back(std::string(to_string(s)));
    j["bench_optimizers"] = {{"schemes", schemes},
                             {"start", o.start},
                             {"operating_voltage", o.operating_voltage},
                             {"load_fraction", o.load_fraction},
                             {"v_ref", o.v_ref},
                             {"max_cost_evals", o.budget.max_cost_evals},
                             {"max_iterations", o.budget.max_iterations},
                             {"grid_initial_step", o.grid.initial_step},
                             {"grid_min_step", o.grid.min_step},
                             {"adaptive_base_step", o.adaptive.base_step},
                             {"adaptive_gain", o.adaptive.gain},
                             {"adaptive_threshold", o.adaptive.threshold},
                             {"adaptive_max_step", o.adaptive.max_step},
                             {"adaptive_min_step", o.adaptive.min_step},
                             {"target_tolerance", o.target_tolerance}};
    const auto& k = c.cost;
    j["cost"] = {{"v_ref", k.v_ref},
                 {"w_ipp", k.w_ipp},
                 {"w_zvs", k.w_zvs},
                 {"gate_midpoint", k.gate_midpoint},
                 {"gate_sharpness", k.gate_sharpness},
                 {"i_pp_norm", k.i_pp_norm},
                 {"i_min", k.i_min},
                 {"output_index", k.output_index},
                 {"current_index", k.current_index}};
    j["pi"] = {{"kp", c.pi.kp}, {"ki", c.pi.ki}};
    j["mpc"] = {{"scheme", std::string(to_string(c.mpc.scheme))},
                {"iterations", c.mpc.iterations},
                {"sigma", c.mpc.sso.sigma},
                {"rho", c.mpc.sso.rho},
                {"initial_scale", c.mpc.sso.initial_scale},
                {"min_scale", c.mpc.sso.min_scale},
                {"estimate_load", c.mpc.estimate_load},
                {"output_capacitor", c.mpc.output_capacitor},
                {"load_quantum", c.mpc.load_quantum},
                {"d0_max", c.mpc.d0_max}};
    j["settling"] = {{"band", c.settling.band},
                     {"hold_cycles", c.settling.hold_cycles},
                     {"post_step_cycles", c.settling.post_step_cycles}};
    Json sc = Json::array();
    for (const auto& s : c.scenarios) {
        sc.push_back({{"kind", s.kind},
                      {"from", s.from},
                      {"to", s.to},
                      {"v_ref", s.v_ref},
                      {"load_fraction", s.load_fraction},
                      {"pre_cycles", s.pre_cycles},
                      {"post_cycles", s.post_cycles}});
    }
    j["scenarios"] = sc;
    return j;
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

HarnessConfig from_json(const Json& j, const std::filesystem::path& base_dir) {
    HarnessConfig c;
    check_keys(j,
               {"version", "seed", "netlist", "output_dir", "load_id", "dab", "simulate", "dataset", "train",
                "eval", "bench_solvers", "bench_optimizers", "cost", "pi", "mpc", "settling", "scenarios"},
               "config");
    read(j, "version", c.version);
    if (c.version != kConfigVersion) throw InputError("unsupported config version " + std::to_string(c.version));
    std::uint64_t seed = c.seed;
    read(j, "seed", seed);
    std::string path;
    if (j.contains("netlist")) {
        read(j, "netlist", path);
        c.netlist = resolve(path, base_dir);
    }
    if (j.contains("output_dir")) {
        read(j, "output_dir", path);
        c.output_dir = resolve(path, base_dir);
    }
    read(j, "load_id", c.load_id);
    if (j.contains("dab")) {
        const auto& s = j.at("dab");
        check_keys(s, {"vin", "period", "rated_power", "v_rated", "v_min", "v_max", "dead_time"}, "dab");
        read(s, "vin", c.dab.vin);
        read(s, "period", c.dab.period);
        read(s, "rated_power", c.dab.rated_power);
        read(s, "v_rated", c.dab.v_rated);
        read(s, "v_min", c.dab.v_min);
        read(s, "v_max", c.dab.v_max);
        read(s, "dead_time", c.dab.dead_time);
    }
    if (j.contains("simulate")) {
        const auto& s = j.at("simulate");
        check_keys(s, {"command", "cycles", "load", "initial_state", "solver", "fixed_step", "rel_tol", "abs_tol"},
                   "simulate");
        read_command(s, "command", c.simulate.command);
        read(s, "cycles", c.simulate.cycles);
        read(s, "load", c.simulate.load);
        read_vec(s, "initial_state", c.simulate.initial_state);
        if (s.contains("solver")) c.simulate.solver.kind = solver_kind_from_string(s.at("solver").get<std::string>());
        read(s, "fixed_step", c.simulate.solver.fixed_step);
        read(s, "rel_tol", c.simulate.solver.rel_tol);
        read(s, "abs_tol", c.simulate.solver.abs_tol);
    }
    if (j.contains("dataset")) {
        const auto& s = j.at("dataset");
        check_keys(s,
                   {"tps_points", "dps_points", "sps_points", "loads", "draws_per_point", "state_lo", "state_hi",
                    "rel_tol", "abs_tol"},
                   "dataset");
        read(s, "tps_points", c.dataset.tps_points);
        read(s, "dps_points", c.dataset.dps_points);
        read(s, "sps_points", c.dataset.sps_points);
        read(s, "loads", c.dataset.loads);
        read(s, "draws_per_point", c.dataset.draws_per_point);
        read_vec(s, "state_lo", c.dataset.state_lo);
        read_vec(s, "state_hi", c.dataset.state_hi);
        read(s, "rel_tol", c.dataset.rel_tol);
        read(s, "abs_tol", c.dataset.abs_tol);
    }
    if (j.contains("train")) {
        const auto& s = j.at("train");
        check_keys(s,
                   {"layer_widths", "learning_rate", "beta1", "beta2", "epsilon", "epochs", "batch_size",
                    "validation_fraction"},
                   "train");
        read(s, "layer_widths", c.train.layer_widths);
        read(s, "learning_rate", c.train.adam.learning_rate);
        read(s, "beta1", c.train.adam.beta1);
        read(s, "beta2", c.train.adam.beta2);
        read(s, "epsilon", c.train.adam.epsilon);
        read(s, "epochs", c.train.epochs);
        read(s, "batch_size", c.train.batch_size);
        read(s, "validation_fraction", c.train.validation_fraction);
    }
    if (j.contains("eval")) {
        const auto& s = j.at("eval");
        check_keys(s, {"cycles", "rollout_cycles", "rollout_command", "rollout_load", "rollout_state"}, "eval");
        read(s, "cycles", c.eval.cycles);
        read(s, "rollout_cycles", c.eval.rollout_cycles);
        read_command(s, "rollout_command", c.eval.rollout_command);
        read(s, "rollout_load", c.eval.rollout_load);
        read_vec(s, "rollout_state", c.eval.rollout_state);
    }
    if (j.contains("bench_solvers")) {
        const auto& s = j.at("bench_solvers");
        check_keys(s, {"cycles", "euler_step", "rk2_step", "rk4_step", "load", "timing_repeats"}, "bench_solvers");
        read(s, "cycles", c.bench_solvers.cycles);
        read(s, "euler_step", c.bench_solvers.euler_step);
        read(s, "rk2_step", c.bench_solvers.rk2_step);
        read(s, "rk4_step", c.bench_solvers.rk4_step);
        read(s, "load", c.bench_solvers.load);
        read(s, "timing_repeats", c.bench_solvers.timing_repeats);
    }
    if (j.contains("bench_optimizers")) {
        const auto& s = j.at("bench_optimizers");
        check_keys(s,
                   {"schemes", "start", "operating_voltage", "load_fraction", "v_ref", "max_cost_evals",
                    "max_iterations", "grid_initial_step", "grid_min_step", "adaptive_base_step", "adaptive_gain",
                    "adaptive_threshold", "adaptive_max_step", "adaptive_min_step", "target_tolerance"},
                   "bench_optimizers");
        auto& o = c.bench_optimizers;
        if (s.contains("schemes")) {
            o.schemes.clear();
            for (const auto& n : s.at("schemes")) o.schemes.push_back(scheme_from_string(n.get<std::string>()));
        }
        read(s, "start", o.start);
        read(s, "operating_voltage", o.operating_voltage);
        read(s, "load_fraction", o.load_fraction);
        read(s, "v_ref", o.v_ref);
        read(s, "max_cost_evals", o.budget.max_cost_evals);
        read(s, "max_iterations", o.budget.max_iterations);
        read(s, "grid_initial_step", o.grid.initial_step);
        read(s, "grid_min_step", o.grid.min_step);
        read(s, "adaptive_base_step", o.adaptive.base_step);
        read(s, "adaptive_gain", o.adaptive.gain);
        read(s, "adaptive_threshold", o.adaptive.threshold);
        read(s, "adaptive_max_step", o.adaptive.max_step);
        read(s, "adaptive_min_step", o.adaptive.min_step);
        read(s, "target_tolerance", o.target_tolerance);
    }
    if (j.contains("cost")) {
        const auto& s = j.at("cost");
        check_keys(s,
                   {"v_ref", "w_ipp", "w_zvs", "gate_midpoint", "gate_sharpness", "i_pp_norm", "i_min",
                    "output_index", "current_index"},
                   "cost");
        read(s, "v_ref", c.cost.v_ref);
        read(s, "w_ipp", c.cost.w_ipp);
        read(s, "w_zvs", c.cost.w_zvs);
        read(s, "gate_midpoint", c.cost.gate_midpoint);
        read(s, "gate_sharpness", c.cost.gate_sharpness);
        read(s, "i_pp_norm", c.cost.i_pp_norm);
        read(s, "i_min", c.cost.i_min);
        read(s, "output_index", c.cost.output_index);
        read(s, "current_index", c.cost.current_index);
    }
    if (j.contains("pi")) {
        const auto& s = j.at("pi");
        check_keys(s, {"kp", "ki"}, "pi");
        read(s, "kp", c.pi.kp);
        read(s, "ki", c.pi.ki);
    }
    if (j.contains("mpc")) {
        const auto& s = j.at("mpc");
        check_keys(s,
                   {"scheme", "iterations", "sigma", "rho", "initial_scale", "min_scale", "estimate_load",
                    "output_capacitor", "load_quantum", "d0_max"},
                   "mpc");
        if (s.contains("scheme")) c.mpc.scheme = scheme_from_string(s.at("scheme").get<std::string>());
        read(s, "iterations", c.mpc.iterations);
        read(s, "sigma", c.mpc.sso.sigma);
        read(s, "rho", c.mpc.sso.rho);
        read(s, "initial_scale", c.mpc.sso.initial_scale);
        read(s, "min_scale", c.mpc.sso.min_scale);
        read(s, "estimate_load", c.mpc.estimate_load);
        read(s, "output_capacitor", c.mpc.output_capacitor);
        read(s, "load_quantum", c.mpc.load_quantum);
        read(s, "d0_max", c.mpc.d0_max);
    }
    if (j.contains("settling")) {
        const auto& s = j.at("settling");
        check_keys(s, {"band", "hold_cycles", "post_step_cycles"}, "settling");
        read(s, "band", c.settling.band);
        read(s, "hold_cycles", c.settling.hold_cycles);
        read(s, "post_step_cycles", c.settling.post_step_cycles);
    }
    if (j.contains("scenarios")) {
        c.scenarios.clear();
        for (const auto& s : j.at("scenarios")) {
            check_keys(s, {"kind", "from", "to", "v_ref", "load_fraction", "pre_cycles", "post_cycles"}, "scenarios");
            ScenarioSpec sp;
            read(s, "kind", sp.kind);
            read(s, "from", sp.from);
            read(s, "to", sp.to);
            read(s, "v_ref", sp.v_ref);
            read(s, "load_fraction", sp.load_fraction);
            read(s, "pre_cycles", sp.pre_cycles);
            read(s, "post_cycles", sp.post_cycles);
            c.scenarios.push_back(sp);
        }
    }
    c.set_seed(seed);
    c.validate();
    return c;
}

// ---- numeric helpers -----------------------------------------------------------

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string num17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

void write_json(const std::filesystem::path& p, const Json& j) { write_text_file(p, j.dump(2) + "\n"); }

Json read_json(const std::filesystem::path& p) {
    const auto text = read_text_file(p);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw InputError("invalid JSON in '" + p.string() + "': " + e.what());
    }
}

Vec random_state(std::mt19937_64& rng, const Vec& lo, const Vec& hi) {
    std::uniform_real_distribution<double> un(0.0, 1.0);
    Vec x(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) x[i] = lo[i] + (hi[i] - lo[i]) * un(rng);
    return x;
}

/// Event-point states of a trajectory (timeline events, then the cycle end).
std::vector<Vec> event_states(const Trajectory& t) {
    std::vector<Vec> out;
    for (auto idx : t.event_index) out.push_back(t.states[idx]);
    out.push_back(t.states.back());
    return out;
}

double max_abs_diff(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    if (a.size() != b.size()) throw NumericalError("event sample counts differ");
    double e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, (a[i] - b[i]).cwiseAbs().maxCoeff());
    return e;
}

template <typename F>
double time_it(int repeats, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < repeats; ++r) f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---- HarnessConfig ----------------------------------------------------------------

void HarnessConfig::set_seed(std::uint64_t s) {
    seed = s;
    dataset.seed = s;
    train.seed = s;
}

void HarnessConfig::validate() const {
    if (version != kConfigVersion) throw InputError("unsupported config version");
    if (!(dab.period > 0.0)) throw InputError("dab.period must be positive");
    if (!(dab.rated_power > 0.0 && dab.v_rated > 0.0)) throw InputError("dab ratings must be positive");
    if (simulate.cycles < 0) throw InputError("simulate.cycles must be non-negative");
    if (!(simulate.load > 0.0)) throw InputError("simulate.load must be positive");
    simulate.solver.validate();
    dtmpc::validate(simulate.command);
    train.validate();
    if (eval.cycles < 0 || eval.rollout_cycles < 0) throw InputError("eval cycle counts must be non-negative");
    dtmpc::validate(eval.rollout_command);
    if (bench_solvers.cycles < 0) throw InputError("bench_solvers.cycles must be non-negative");
    if (!(bench_solvers.euler_step > 0.0 && bench_solvers.rk2_step > 0.0 && bench_solvers.rk4_step > 0.0)) {
        throw InputError("bench_solvers steps must be positive");
    }
    if (bench_solvers.timing_repeats < 1) throw InputError("bench_solvers.timing_repeats must be at least 1");
    bench_optimizers.budget.validate();
    if (!(bench_optimizers.start >= 0.0 && bench_optimizers.start <= 1.0)) {
        throw InputError("bench_optimizers.start must be in [0, 1]");
    }
    if (!(bench_optimizers.target_tolerance >= 0.0)) throw InputError("target_tolerance must be non-negative");
    cost.validate();
    if (!(pi.kp >= 0.0 && pi.ki >= 0.0)) throw InputError("PI gains must be non-negative");
    mpc.validate();
    if (!(settling.band > 0.0) || settling.hold_cycles < 1 || settling.post_step_cycles < 0) {
        throw InputError("invalid settling rule");
    }
    for (const auto& s : scenarios) {
        if (s.kind != "load_step" && s.kind != "voltage_step") {
            throw InputError("unknown scenario kind '" + s.kind + "'");
        }
        if (s.pre_cycles < 0 || s.post_cycles < 0) throw InputError("scenario cycle counts must be non-negative");
    }
}

HarnessConfig config_from_json(std::string_view text, const std::filesystem::path& base_dir) {
    Json j;
    try {
        j = Json::parse(text.begin(), text.end());
    } catch (const Json::parse_error& e) {
        throw InputError(std::string("invalid config JSON: ") + e.what());
    }
    return from_json(j, base_dir);
}

std::string config_to_json(const HarnessConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

HarnessConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const MissingArtifactError&) {
        throw InputError("config file '" + path.string() + "' not found");
    }
    return config_from_json(text, path.parent_path());
}

int evals_to_target(const std::vector<TraceEntry>& trace, double target, double tol) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : trace) {
        best = std::min(best, e.cost);
        if (best <= target + tol * std::abs(target)) return e.eval;
    }
    return -1;
}

// ---- Harness ------------------------------------------------------------------------

Harness::Harness(HarnessConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::string text(default_dab_netlist());
    if (!cfg_.netlist.empty()) {
        if (!std::filesystem::is_regular_file(cfg_.netlist)) {
            throw InputError("netlist '" + cfg_.netlist.string() + "' not found");
        }
        text = read_text_file(cfg_.netlist);
    }
    cache_ = std::make_unique<ModelCache>(parse_netlist(text), cfg_.load_id);
}

std::filesystem::path Harness::synth(const std::optional<PhaseShiftCommand>& timeline_command) {
    const auto model = cache_->get(cache_->nominal_load());
    const auto path = out("model.json");
    write_text_file(path, model_to_json(*model));
    if (timeline_command) {
        const auto tl = build_timeline(*timeline_command, cfg_.dab.period, cfg_.dab.dead_time, cache_->layout());
        write_text_file(out("timeline.json"), timeline_to_json(tl));
    }
    return path;
}

std::filesystem::path Harness::simulate() {
    const auto& s = cfg_.simulate;
    const auto model = cache_->get(s.load);
    if (s.initial_state.size() != model->state_dim()) throw InputError("simulate.initial_state has the wrong size");
    const auto tl = build_timeline(s.command, cfg_.dab.period, cfg_.dab.dead_time, cache_->layout());
    const Vec u = model->base().input_values;
    std::ostringstream os;
    Vec x = s.initial_state;
    for (int c = 0; c < s.cycles; ++c) {
        const auto traj = integrate(*model, tl, x, u, s.solver);
        if (!traj.back().allFinite()) throw NumericalError("simulation diverged in cycle " + std::to_string(c));
        write_trajectory_csv(os, traj, model->base().state_labels, c * cfg_.dab.period, c == 0);
        x = traj.back();
    }
    const auto path = out("simulate.csv");
    write_text_file(path, os.str());
    return path;
}

TrainReport Harness::train_nsp(bool save_dataset) {
    auto provider = [this](double r) { return cache_->get(r); };
    DatasetConfig dc = cfg_.dataset;
    dc.period = cfg_.dab.period;
    dc.dead_time = cfg_.dab.dead_time;
    const auto ds = generate_dataset(provider, dc);
    if (save_dataset) {
        std::ostringstream os;
        write_dataset_csv(os, ds);
        write_text_file(out("dataset.csv"), os.str());
    }
    TrainReport rep;
    const auto nsp = dtmpc::train_nsp(ds, cfg_.train, cache_->get(cache_->nominal_load()), &rep);
    write_text_file(out("nsp.json"), nsp_to_json(nsp));

    std::ostringstream curves;
    curves << "state,epoch,train_mse\n";
    Json states = Json::array();
    for (const auto& s : rep.states) {
        for (std::size_t e = 0; e < s.epoch_loss.size(); ++e) {
            curves << s.state.str() << ',' << e << ',' << num17(s.epoch_loss[e]) << '\n';
        }
        states.push_back({{"state", s.state.str()},
                          {"train_samples", s.train_samples},
                          {"validation_samples", s.validation_samples},
                          {"final_train_mse", s.final_train_mse},
                          {"validation_mse", s.validation_mse}});
    }
    write_text_file(out("train_curves.csv"), curves.str());
    Json j;
    j["provenance"] = ds.provenance;
    j["samples"] = ds.samples.size();
    j["cycles"] = ds.cycles;
    j["discarded_cycles"] = ds.discarded_cycles;
    j["final_train_mse"] = rep.final_train_mse;
    j["validation_mse"] = rep.validation_mse;
    j["states"] = states;
    j["raw"] = {"train_curves.csv"};
    write_json(out("train_report.json"), j);
    return rep;
}

NspModel Harness::load_nsp() const {
    const auto path = cfg_.output_dir / "nsp.json";
    if (!std::filesystem::exists(path)) {
        throw MissingArtifactError("trained predictor '" + path.string() +
                                   "' not found; run 'train-nsp' with the same --out first");
    }
    return nsp_from_json(read_text_file(path));
}

NspEvalResult Harness::eval_nsp() {
    const auto nsp_nominal = load_nsp();
    const auto& e = cfg_.eval;
    const double T = cfg_.dab.period;
    NspEvalResult r;

    // Single cycles at the nominal load from random states and TPS commands.
    const auto model = cache_->get(cache_->nominal_load());
    const auto nsp = nsp_nominal.with_core(model);
    const Vec u = model->base().input_values;
    std::mt19937_64 rng(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> un(0.0, 1.0);
    std::ostringstream cyc;
    cyc << "cycle,d0,d1,d2,nsp_error,euler_error\n";
    double sum_n = 0.0;
    double sum_e = 0.0;
    double ratio_sum = 0.0;
    int counted = 0;
    for (int k = 0; k < e.cycles; ++k) {
        const PhaseShiftCommand cmd{un(rng), un(rng), un(rng), Scheme::TPS};
        const Vec x0 = random_state(rng, cfg_.dataset.state_lo, cfg_.dataset.state_hi);
        const Vec ref = simulate_cycle(*model, x0, u, cmd, T).x_end();
        const double en = (predict_cycle(nsp, x0, u, cmd, T).x_end() - ref).norm();
        const double ee = (predict_cycle_euler(*model, x0, u, cmd, T).x_end() - ref).norm();
        cyc << k << ',' << num17(cmd.d0) << ',' << num17(cmd.d1) << ',' << num17(cmd.d2) << ',' << num17(en) << ','
            << num17(ee) << '\n';
        sum_n += en * en;
        sum_e += ee * ee;
        if (ee > 0.0) {
            const double ratio = en / ee;
            ratio_sum += ratio;
            r.cycle_ratio_worst = std::max(r.cycle_ratio_worst, ratio);
            ++counted;
        }
    }
    r.cycle_ratio_rms = sum_e > 0.0 ? std::sqrt(sum_n / sum_e) : 0.0;
    r.cycle_ratio_mean = counted > 0 ? ratio_sum / counted : 0.0;

    // Open-loop rollout.
    const auto rmodel = cache_->get(e.rollout_load);
    const auto rnsp = nsp_nominal.with_core(rmodel);
    const Vec ru = rmodel->base().input_values;
    const int m = rmodel->state_dim();
    if (e.rollout_state.size() != m) throw InputError("eval.rollout_state has the wrong size");
    Vec xr = e.rollout_state;
    Vec xn = xr;
    Vec xe = xr;
    bool euler_ok = true;
    std::vector<Vec> ref_s;
    std::vector<Vec> nsp_s;
    std::vector<Vec> eul_s;
    Vec lo = xr;
    Vec hi = xr;
    for (int k = 0; k < e.rollout_cycles; ++k) {
        xr = simulate_cycle(*rmodel, xr, ru, e.rollout_command, T).x_end();
        xn = predict_cycle(rnsp, xn, ru, e.rollout_command, T).x_end();
        if (euler_ok) {
            xe = predict_cycle_euler(*rmodel, xe, ru, e.rollout_command, T).x_end();
            if (!xe.allFinite() || xe.cwiseAbs().maxCoeff() > 1e12) euler_ok = false;
        }
        lo = lo.cwiseMin(xr);
        hi = hi.cwiseMax(xr);
        ref_s.push_back(xr);
        nsp_s.push_back(xn);
        eul_s.push_back(euler_ok ? xe : Vec::Constant(m, std::numeric_limits<double>::infinity()));
    }
    r.rollout_range = hi - lo;
    std::ostringstream roll;
    roll << "cycle";
    for (int i = 0; i < m; ++i) roll << ",ref" << i;
    for (int i = 0; i < m; ++i) roll << ",nsp" << i;
    for (int i = 0; i < m; ++i) roll << ",euler" << i;
    roll << '\n';
    for (std::size_t k = 0; k < ref_s.size(); ++k) {
        roll << k + 1;
        for (const auto* v : {&ref_s[k], &nsp_s[k], &eul_s[k]}) {
            for (int i = 0; i < m; ++i) roll << ',' << num17((*v)[i]);
        }
        roll << '\n';
        for (int i = 0; i < m; ++i) {
            const double range = r.rollout_range[i] > 0.0 ? r.rollout_range[i] : 1.0;
            r.rollout_error = std::max(r.rollout_error, std::abs(nsp_s[k][i] - ref_s[k][i]) / range);
            const double ee = std::abs(eul_s[k][i] - ref_s[k][i]) / range;
            r.rollout_euler_error = std::max(r.rollout_euler_error, std::isnan(ee) ? HUGE_VAL : ee);
        }
    }
    write_text_file(out("eval_nsp_cycles.csv"), cyc.str());
    write_text_file(out("eval_nsp_rollout.csv"), roll.str());
    Json j;
    j["provenance"] = rnsp.provenance;
    j["cycles"] = e.cycles;
    j["cycle_ratio_rms"] = r.cycle_ratio_rms;
    j["cycle_ratio_mean"] = r.cycle_ratio_mean;
    j["cycle_ratio_worst"] = r.cycle_ratio_worst;
    j["rollout_cycles"] = e.rollout_cycles;
    j["rollout_error"] = r.rollout_error;
    j["rollout_euler_error"] = finite_or_null(r.rollout_euler_error);
    j["rollout_euler_diverged"] = !std::isfinite(r.rollout_euler_error);
    j["rollout_range"] = vec_json(r.rollout_range);
    j["raw"] = {"eval_nsp_cycles.csv", "eval_nsp_rollout.csv"};
    write_json(out("eval_nsp.json"), j);
    return r;
}

SolverBenchResult Harness::bench_solvers() {
    const auto& b = cfg_.bench_solvers;
    const double T = cfg_.dab.period;
    const auto model = cache_->get(b.load);
    const Vec u = model->base().input_values;
    SolverBenchResult res;
    Json rows = Json::array();
    Json timing = Json::array();
    std::ostringstream raw;
    raw << "cycle,solver,points,max_abs_error\n";
    if (b.cycles > 0) {
        const auto nsp = load_nsp().with_core(model);
        std::mt19937_64 rng(cfg_.seed ^ 0xb5026f5aa96619e9ULL);
        std::uniform_real_distribution<double> un(0.0, 1.0);
        struct Case {
            SwitchTimeline tl;
            PhaseShiftCommand cmd;
            Vec x0;
            std::vector<Vec> ref;
            double scale = 0.0;
        };
        std::vector<Case> cases;
        for (int k = 0; k < b.cycles; ++k) {
            Case c;
            c.cmd = {un(rng), un(rng), un(rng), Scheme::TPS};
            c.x0 = random_state(rng, cfg_.dataset.state_lo, cfg_.dataset.state_hi);
            c.tl = build_timeline(c.cmd, T, cfg_.dab.dead_time, cache_->layout());
            c.ref = event_states(integrate_adaptive_reference(*model, c.tl, c.x0, u, cfg_.dataset.rel_tol,
                                                              cfg_.dataset.abs_tol));
            for (const auto& v : c.ref) c.scale = std::max(c.scale, v.cwiseAbs().maxCoeff());
            cases.push_back(std::move(c));
        }
        struct Entry {
            std::string name;
            std::function<std::pair<int, std::vector<Vec>>(const Case&)> run;
        };
        auto fixed = [&](SolverKind kind, double h) {
            return [&, kind, h](const Case& c) {
                SolverConfig sc;
                sc.kind = kind;
                sc.fixed_step = h;
                const auto t = integrate_fixed(*model, c.tl, c.x0, u, sc);
                return std::make_pair(t.evaluations, event_states(t));
            };
        };
        const std::vector<Entry> entries = {
            {"ode1_euler", fixed(SolverKind::Euler, b.euler_step)},
            {"ode2_rk2", fixed(SolverKind::RK2, b.rk2_step)},
            {"ode4_rk4", fixed(SolverKind::RK4, b.rk4_step)},
            {"event_driven",
             [&](const Case& c) {
                 const auto t = integrate_event_driven(*model, c.tl, c.x0, u);
                 return std::make_pair(t.evaluations, event_states(t));
             }},
            {"nsp",
             [&](const Case& c) {
                 const auto p = predict_cycle(nsp, c.x0, u, c.cmd, T, cfg_.dab.dead_time);
                 return std::make_pair(p.net_evaluations, p.states);
             }},
            {"euler_chain",
             [&](const Case& c) {
                 const auto p = predict_cycle_euler(*model, c.x0, u, c.cmd, T, cfg_.dab.dead_time);
                 return std::make_pair(static_cast<int>(p.timeline.events.size()), p.states);
             }},
        };
        std::vector<double> seconds;
        for (const auto& e : entries) {
            SolverBenchRow row;
            row.name = e.name;
            double points = 0.0;
            for (std::size_t k = 0; k < cases.size(); ++k) {
                const auto [n, states] = e.run(cases[k]);
                const double err = max_abs_diff(states, cases[k].ref);
                points += n;
                row.max_abs_error = std::max(row.max_abs_error, err);
                row.max_rel_error = std::max(row.max_rel_error, err / cases[k].scale);
                raw << k << ',' << e.name << ',' << n << ',' << num17(err) << '\n';
            }
            row.points_per_cycle = points / static_cast<double>(cases.size());
            seconds.push_back(time_it(b.timing_repeats, [&] {
                for (const auto& c : cases) (void)e.run(c);
            }));
            res.rows.push_back(row);
        }
        const double rk4 = seconds[2];
        for (std::size_t i = 0; i < res.rows.size(); ++i) {
            res.rows[i].wall_ratio = seconds[i] / rk4;
            timing.push_back({{"solver", res.rows[i].name}, {"wall_ratio", res.rows[i].wall_ratio}});
        }
    }
    for (const auto& row : res.rows) {
        rows.push_back({{"solver", row.name},
                        {"points_per_cycle", row.points_per_cycle},
                        {"max_abs_error", row.max_abs_error},
                        {"max_rel_error", row.max_rel_error}});
    }
    write_text_file(out("bench_solvers.csv"), raw.str());
    write_json(out("bench_solvers.json"), {{"cycles", b.cycles}, {"rows", rows}, {"raw", {"bench_solvers.csv"}}});
    // Wall time is machine dependent and kept out of the deterministic report.
    write_json(out("timing.json"), {{"relative_to", "ode4_rk4"}, {"rows", timing}});
    return res;
}

CostFunction Harness::benchmark_cost(const NspModel& nsp, Scheme scheme) {
    const auto& o = cfg_.bench_optimizers;
    const double load = cfg_.dab.load_for_fraction(o.load_fraction);
    const auto model = cache_->get(load);
    const auto op = sps_operating_point(*model, o.operating_voltage, cfg_.dab.period, cfg_.dab.dead_time);
    auto bound = std::make_shared<NspModel>(nsp.with_core(model));
    CostSpec spec = cfg_.cost;
    spec.v_ref = o.v_ref;
    const double T = cfg_.dab.period;
    const double dead = cfg_.dab.dead_time;
    const Vec x0 = op.state;
    return [bound, spec, scheme, x0, T, dead](const Vec& v) {
        const auto cmd = from_vector(clamp_to_box(v), scheme);
        const auto p = predict_cycle(*bound, x0, bound->core().base().input_values, cmd, T, dead);
        return total_cost(extract_metrics(p.timeline, p.states, spec), spec);
    };
}

OptimizerBenchResult Harness::bench_optimizers() {
    const auto nsp = load_nsp();
    const auto& o = cfg_.bench_optimizers;
    OptimizerBenchResult res;
    Json rows = Json::array();
    Json raw = Json::array();
    for (const auto scheme : o.schemes) {
        const int n = dimension(scheme);
        const auto f = benchmark_cost(nsp, scheme);
        const Vec start = Vec::Constant(n, o.start);
        std::vector<std::pair<std::string, OptimizeResult>> runs;
        runs.emplace_back("grid", optimize_grid(f, start, o.grid, o.budget));
        runs.emplace_back("adaptive_grid", optimize_adaptive_grid(f, start, o.adaptive, o.budget));
        runs.emplace_back("sso", optimize_sso(f, start, cfg_.mpc.sso, o.budget));
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [name, r] : runs) best = std::min(best, r.best_cost);
        res.best_cost.emplace_back(scheme, best);
        for (const auto& [name, r] : runs) {
            OptimizerBenchRow row;
            row.scheme = scheme;
            row.method = name;
            row.evaluations = r.evaluations;
            row.iterations = r.iterations;
            row.final_cost = r.best_cost;
            row.evals_to_target = evals_to_target(r.trace, best, o.target_tolerance);
            std::map<int, int> per_iter;
            for (const auto& e : r.trace) {
                if (e.iter > 0) ++per_iter[e.iter];
            }
            int total = 0;
            for (const auto& [it, count] : per_iter) {
                row.max_evals_per_iteration = std::max(row.max_evals_per_iteration, count);
                total += count;
            }
            row.mean_evals_per_iteration = per_iter.empty() ? 0.0 : static_cast<double>(total) / per_iter.size();
            row.trace_csv = "bench_optimizers/" + std::string(to_string(scheme)) + "_" + name + ".csv";
            std::ostringstream os;
            write_trace_csv(os, r.trace);
            write_text_file(out(row.trace_csv), os.str());
            raw.push_back(row.trace_csv);
            rows.push_back({{"scheme", std::string(to_string(scheme))},
                            {"method", name},
                            {"evaluations", row.evaluations},
                            {"iterations", row.iterations},
                            {"final_cost", row.final_cost},
                            {"evals_to_target", row.evals_to_target},
                            {"max_evals_per_iteration", row.max_evals_per_iteration},
                            {"mean_evals_per_iteration", row.mean_evals_per_iteration},
                            {"termination", std::string(to_string(r.termination))},
                            {"trace", row.trace_csv}});
            res.rows.push_back(row);
        }
    }
    Json best = Json::object();
    for (const auto& [s, c] : res.best_cost) best[std::string(to_string(s))] = c;
    write_json(out("bench_optimizers.json"), {{"start", o.start},
                                              {"target_tolerance", o.target_tolerance},
                                              {"best_cost", best},
                                              {"rows", rows},
                                              {"raw", raw}});
    return res;
}

std::vector<ScenarioResult> Harness::run_scenarios() {
    std::optional<NspModel> nsp;
    if (!cfg_.scenarios.empty()) nsp = load_nsp();
    const double T = cfg_.dab.period;
    Plant plant(*cache_, T, cfg_.dab.dead_time);
    std::vector<ScenarioResult> results;
    Json entries = Json::array();
    Json raw = Json::array();
    for (const auto& sp : cfg_.scenarios) {
        const Scenario sc =
            sp.kind == "load_step"
                ? load_step_scenario(*cache_, cfg_.dab, sp.from, sp.to, sp.v_ref, sp.pre_cycles, sp.post_cycles)
                : voltage_step_scenario(*cache_, cfg_.dab, sp.load_fraction, sp.from, sp.to, sp.pre_cycles,
                                        sp.post_cycles);
        PiController pi(cfg_.pi, T, 0.0, 0.5, cfg_.cost.output_index);
        DtMpcController mpc(*nsp, *cache_, cfg_.cost, cfg_.mpc, T);
        for (Controller* ctrl : std::initializer_list<Controller*>{&pi, &mpc}) {
            auto r = run_scenario(plant, *ctrl, sc, cfg_.cost, cfg_.settling);
            const std::string tag = ctrl->name() == "PI" ? "pi" : "dt_mpc";
            const std::string csv = "scenarios/" + sc.name + "_" + tag + ".csv";
            std::ostringstream os;
            write_scenario_csv(os, r);
            write_text_file(out(csv), os.str());
            raw.push_back(csv);
            const auto& s = r.summary;
            entries.push_back({{"scenario", sc.name},
                               {"controller", r.controller},
                               {"cycles", sc.duration_cycles},
                               {"step_cycle", sc.step_cycle},
                               {"settled", s.settled},
                               {"settling_cycles", s.settling_cycles},
                               {"max_voltage_deviation", s.max_voltage_deviation},
                               {"max_i_L", s.max_i_L},
                               {"i_pp_steady", s.i_pp_steady},
                               {"zvs_events_satisfied", s.zvs_events_satisfied},
                               {"zvs_events_total", s.zvs_events_total},
                               {"gate_post_step_max", s.gate_post_step_max},
                               {"gate_settled_fraction", s.gate_settled_fraction},
                               {"settled_window", s.settled_window},
                               {"csv", csv}});
            results.push_back(std::move(r));
        }
    }
    write_json(out("scenarios.json"), {{"pi", {{"kp", cfg_.pi.kp}, {"ki", cfg_.pi.ki}}},
                                       {"settling", {{"band", cfg_.settling.band},
                                                     {"hold_cycles", cfg_.settling.hold_cycles}}},
                                       {"results", entries},
                                       {"raw", raw}});
    return results;
}

std::filesystem::path Harness::report() {
    const std::vector<std::string> sections = {"train_report", "eval_nsp", "bench_solvers", "bench_optimizers",
                                               "scenarios"};
    Json rep;
    rep["seed"] = cfg_.seed;
    Json missing = Json::array();
    int present = 0;
    for (const auto& s : sections) {
        const auto p = out(s + ".json");
        if (std::filesystem::exists(p)) {
            rep[s] = read_json(p);
            ++present;
        } else {
            missing.push_back(s);
        }
    }
    if (present == 0) {
        throw MissingArtifactError("no report sections in '" + cfg_.output_dir.string() +
                                   "'; run train-nsp, eval-nsp, bench-solvers, bench-optimizers or run-scenarios first");
    }
    rep["missing"] = missing;
    write_json(out("report.json"), rep);

    std::ostringstream md;
    md << "# Benchmark report\n\nseed: " << cfg_.seed << "\n";
    if (rep.contains("eval_nsp")) {
        const auto& e = rep["eval_nsp"];
        md << "\n## Surrogate accuracy\n\n| metric | value |\n|---|---|\n";
        md << "| per-cycle error ratio (RMS) | " << fmt(e["cycle_ratio_rms"].get<double>()) << " |\n";
        md << "| per-cycle error ratio (worst) | " << fmt(e["cycle_ratio_worst"].get<double>()) << " |\n";
        md << "| rollout error, fraction of range | " << fmt(e["rollout_error"].get<double>()) << " |\n";
        md << "| Euler rollout error, fraction of range | "
           << (e["rollout_euler_error"].is_null() ? std::string("diverged")
                                                  : fmt(e["rollout_euler_error"].get<double>()))
           << " |\n";
    }
    if (rep.contains("bench_solvers")) {
        md << "\n## Solvers\n\n| solver | points/cycle | max abs error | max rel error |\n|---|---|---|---|\n";
        for (const auto& r : rep["bench_solvers"]["rows"]) {
            md << "| " << r["solver"].get<std::string>() << " | " << fmt(r["points_per_cycle"].get<double>()) << " | "
               << fmt(r["max_abs_error"].get<double>()) << " | " << fmt(r["max_rel_error"].get<double>()) << " |\n";
        }
        md << "\nWall-time ratios are in timing.json (machine dependent).\n";
    }
    if (rep.contains("bench_optimizers")) {
        md << "\n## Optimizers\n\n| scheme | method | evals | evals/iter (max) | evals to target | final cost |\n"
              "|---|---|---|---|---|---|\n";
        for (const auto& r : rep["bench_optimizers"]["rows"]) {
            md << "| " << r["scheme"].get<std::string>() << " | " << r["method"].get<std::string>() << " | "
               << r["evaluations"].get<int>() << " | " << r["max_evals_per_iteration"].get<int>() << " | "
               << (r["evals_to_target"].get<int>() < 0 ? std::string("never")
                                                        : std::to_string(r["evals_to_target"].get<int>()))
               << " | " << fmt(r["final_cost"].get<double>()) << " |\n";
        }
    }
    if (rep.contains("scenarios")) {
        md << "\n## Closed loop\n\n| scenario | controller | settling cycles | max dev [V] | max i_L [A] | "
              "i_pp steady [A] | ZVS |\n|---|---|---|---|---|---|---|\n";
        for (const auto& r : rep["scenarios"]["results"]) {
            md << "| " << r["scenario"].get<std::string>() << " | " << r["controller"].get<std::string>() << " | "
               << r["settling_cycles"].get<int>() << (r["settled"].get<bool>() ? "" : " (not settled)") << " | "
               << fmt(r["max_voltage_deviation"].get<double>()) << " | " << fmt(r["max_i_L"].get<double>()) << " | "
               << fmt(r["i_pp_steady"].get<double>()) << " | " << r["zvs_events_satisfied"].get<int>() << "/"
               << r["zvs_events_total"].get<int>() << " |\n";
        }
    }
    const auto path = out("report.md");
    write_text_file(path, md.str());
    return out("report.json");
}

}  // namespace dtmpc
