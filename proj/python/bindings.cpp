#include "dtmpc/harness.hpp"
#include "dtmpc/serialize.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace dtmpc;

namespace {

Harness make_harness(const std::string& config_path, std::optional<std::uint64_t> seed,
                     std::optional<std::string> out) {
    HarnessConfig cfg = config_path.empty() ? HarnessConfig{} : load_config(config_path);
    if (seed) cfg.set_seed(*seed);
    if (out) cfg.output_dir = *out;
    return Harness(std::move(cfg));
}

py::dict trace_dict(const std::vector<TraceEntry>& trace) {
    std::vector<int> iter, eval;
    std::vector<double> cost;
    std::vector<std::string> phase;
    std::vector<Vec> u;
    for (const auto& e : trace) {
        iter.push_back(e.iter);
        eval.push_back(e.eval);
        cost.push_back(e.cost);
        phase.push_back(e.phase);
        u.push_back(e.u);
    }
    py::dict d;
    d["iter"] = iter;
    d["eval"] = eval;
    d["cost"] = cost;
    d["phase"] = phase;
    d["u"] = u;
    return d;
}

}  // namespace

PYBIND11_MODULE(_dtmpc, m) {
    m.doc() = "Netlist-to-MPC toolkit for phase-shift-modulated converters";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    auto input = py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<MissingArtifactError>(m, "MissingArtifactError", PyExc_FileNotFoundError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<TopologyError>(m, "TopologyError", input.ptr());
    (void)base;

    py::enum_<Scheme>(m, "Scheme").value("SPS", Scheme::SPS).value("DPS", Scheme::DPS).value("TPS", Scheme::TPS);

    py::class_<PhaseShiftCommand>(m, "PhaseShiftCommand")
        .def(py::init([](double d0, double d1, double d2, Scheme s) { return PhaseShiftCommand{d0, d1, d2, s}; }),
             py::arg("d0") = 0.0, py::arg("d1") = 0.0, py::arg("d2") = 0.0, py::arg("scheme") = Scheme::TPS)
        .def_readwrite("d0", &PhaseShiftCommand::d0)
        .def_readwrite("d1", &PhaseShiftCommand::d1)
        .def_readwrite("d2", &PhaseShiftCommand::d2)
        .def_readwrite("scheme", &PhaseShiftCommand::scheme)
        .def("__repr__", [](const PhaseShiftCommand& c) {
            return "PhaseShiftCommand(" + std::to_string(c.d0) + ", " + std::to_string(c.d1) + ", " +
                   std::to_string(c.d2) + ", " + std::string(to_string(c.scheme)) + ")";
        });

    m.def("default_dab_netlist", [] { return std::string(default_dab_netlist()); });

    m.def(
        "event_times",
        [](const PhaseShiftCommand& cmd, double period, double dead_time) {
            std::vector<double> t;
            for (const auto& e : build_timeline(cmd, period, dead_time).events) t.push_back(e.time);
            return t;
        },
        py::arg("command"), py::arg("period") = 10e-6, py::arg("dead_time") = 0.0,
        "Switching event times of one cycle.");

    py::class_<ModelCache>(m, "ConverterModel")
        .def(py::init([](const std::string& netlist, const std::string& load_id) {
                 return std::make_unique<ModelCache>(parse_netlist(netlist), load_id);
             }),
             py::arg("netlist") = std::string(default_dab_netlist()), py::arg("load_id") = "RLOAD")
        .def_property_readonly("nominal_load", &ModelCache::nominal_load)
        .def(
            "model_json", [](ModelCache& c, double load) { return model_to_json(*c.get(load)); }, py::arg("load"))
        .def(
            "simulate_cycle",
            [](ModelCache& c, const Vec& x0, const PhaseShiftCommand& cmd, double load, double period,
               double dead_time) {
                const auto model = c.get(load);
                return simulate_cycle(*model, x0, model->base().input_values, cmd, period, dead_time).states;
            },
            py::arg("x0"), py::arg("command"), py::arg("load"), py::arg("period") = 10e-6,
            py::arg("dead_time") = 0.0, "States at every event and at the cycle end (exact propagation).");

    m.def(
        "optimize_sso",
        [](const std::function<double(const Vec&)>& f, const Vec& start, int max_evals, int max_iterations) {
            const auto r = optimize_sso(f, start, SsoConfig{}, OptimizeBudget{max_evals, max_iterations});
            py::dict d;
            d["best"] = r.best;
            d["best_cost"] = r.best_cost;
            d["evaluations"] = r.evaluations;
            d["iterations"] = r.iterations;
            d["termination"] = std::string(to_string(r.termination));
            d["trace"] = trace_dict(r.trace);
            return d;
        },
        py::arg("cost"), py::arg("start"), py::arg("max_evals") = 1000, py::arg("max_iterations") = 1000,
        "Sufficient-decrease simplex search on the unit box.");

    m.def(
        "config_json",
        [](const std::string& path) {
            return config_to_json(path.empty() ? HarnessConfig{} : load_config(path));
        },
        py::arg("path") = "", "Resolved configuration as JSON text.");

    py::class_<Harness>(m, "Harness")
        .def(py::init(&make_harness), py::arg("config") = "", py::arg("seed") = py::none(),
             py::arg("out") = py::none())
        .def("synth",
             [](Harness& h, std::optional<PhaseShiftCommand> cmd) { return h.synth(cmd).string(); },
             py::arg("timeline_command") = py::none())
        .def("simulate", [](Harness& h) { return h.simulate().string(); })
        .def("train_nsp",
             [](Harness& h, bool save) {
                 TrainReport r;
                 {
                     py::gil_scoped_release release;
                     r = h.train_nsp(save);
                 }
                 return py::dict(py::arg("final_train_mse") = r.final_train_mse,
                                 py::arg("validation_mse") = r.validation_mse);
             },
             py::arg("save_dataset") = false)
        .def("eval_nsp",
             [](Harness& h) {
                 const auto r = h.eval_nsp();
                 return py::dict(py::arg("cycle_ratio_rms") = r.cycle_ratio_rms,
                                 py::arg("cycle_ratio_worst") = r.cycle_ratio_worst,
                                 py::arg("rollout_error") = r.rollout_error,
                                 py::arg("rollout_euler_error") = r.rollout_euler_error);
             })
        .def("bench_solvers",
             [](Harness& h) {
                 py::list rows;
                 for (const auto& r : h.bench_solvers().rows) {
                     rows.append(py::dict(py::arg("name") = r.name, py::arg("points_per_cycle") = r.points_per_cycle,
                                          py::arg("max_abs_error") = r.max_abs_error,
                                          py::arg("max_rel_error") = r.max_rel_error));
                 }
                 return rows;
             })
        .def("bench_optimizers",
             [](Harness& h) {
                 py::list rows;
                 for (const auto& r : h.bench_optimizers().rows) {
                     rows.append(py::dict(py::arg("scheme") = std::string(to_string(r.scheme)),
                                          py::arg("method") = r.method, py::arg("evaluations") = r.evaluations,
                                          py::arg("final_cost") = r.final_cost,
                                          py::arg("evals_to_target") = r.evals_to_target,
                                          py::arg("max_evals_per_iteration") = r.max_evals_per_iteration));
                 }
                 return rows;
             })
        .def("run_scenarios",
             [](Harness& h) {
                 py::list rows;
                 for (const auto& r : h.run_scenarios()) {
                     const auto& s = r.summary;
                     rows.append(py::dict(py::arg("scenario") = r.scenario, py::arg("controller") = r.controller,
                                          py::arg("settled") = s.settled,
                                          py::arg("settling_cycles") = s.settling_cycles,
                                          py::arg("i_pp_steady") = s.i_pp_steady,
                                          py::arg("zvs_events_satisfied") = s.zvs_events_satisfied,
                                          py::arg("zvs_events_total") = s.zvs_events_total));
                 }
                 return rows;
             })
        .def("report", [](Harness& h) { return h.report().string(); });
}
