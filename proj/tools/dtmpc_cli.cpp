#include "dtmpc/harness.hpp"
#include "dtmpc/serialize.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kInput = 2, kMissing = 3, kNumerical = 4 };

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

dtmpc::HarnessConfig make_config(const GlobalOptions& g) {
    dtmpc::HarnessConfig cfg = g.config.empty() ? dtmpc::HarnessConfig{} : dtmpc::load_config(g.config);
    if (g.seed) cfg.set_seed(*g.seed);
    if (!g.out.empty()) cfg.output_dir = g.out;
    cfg.validate();
    return cfg;
}

void print_report_summary(const dtmpc::Harness& h) {
    std::cout << "report: " << h.out("report.json").string() << "\n";
    std::cout << "report: " << h.out("report.md").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Netlist-to-MPC toolkit for phase-shift-modulated converters"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config, "JSON configuration file");
    app.add_option("--seed", g.seed, "Seed for every stochastic stage");
    app.add_option("--out", g.out, "Output directory");

    std::string netlist;
    std::vector<double> timeline;
    auto* synth = app.add_subcommand("synth", "Compile a netlist into model.json");
    synth->add_option("--netlist", netlist, "Netlist file (default: built-in DAB)");
    synth->add_option("--dump-timeline", timeline, "Also write timeline.json for a TPS command d0 d1 d2")
        ->expected(3);

    std::string solver;
    std::optional<int> cycles;
    std::vector<double> command;
    std::optional<double> load;
    auto* simulate = app.add_subcommand("simulate", "Integrate cycles of the compiled model into simulate.csv");
    simulate->add_option("--solver", solver, "euler | rk2 | rk4 | event_driven | adaptive_reference");
    simulate->add_option("--cycles", cycles, "Number of switching cycles");
    simulate->add_option("--command", command, "TPS command d0 d1 d2")->expected(3);
    simulate->add_option("--load", load, "Load resistance in ohm");

    bool save_dataset = false;
    auto* train = app.add_subcommand("train-nsp", "Generate the residual dataset and train the surrogate");
    train->add_flag("--save-dataset", save_dataset, "Also write dataset.csv");

    auto* eval = app.add_subcommand("eval-nsp", "Per-cycle and rollout accuracy of the trained surrogate");
    auto* bench_s = app.add_subcommand("bench-solvers", "Points per cycle and accuracy of each predictor");
    auto* bench_o = app.add_subcommand("bench-optimizers", "Grid, adaptive grid and simplex search on the surrogate cost");
    auto* scen = app.add_subcommand("run-scenarios", "PI and DT-MPC on the closed-loop scenarios");
    auto* report = app.add_subcommand("report", "Assemble report.json and report.md");
    for (auto* sc : app.get_subcommands({})) sc->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kInput;
    }

    try {
        auto cfg = make_config(g);
        if (*synth && !netlist.empty()) cfg.netlist = netlist;
        if (*simulate) {
            if (!solver.empty()) cfg.simulate.solver.kind = dtmpc::solver_kind_from_string(solver);
            if (cycles) cfg.simulate.cycles = *cycles;
            if (!command.empty()) cfg.simulate.command = {command[0], command[1], command[2], dtmpc::Scheme::TPS};
            if (load) cfg.simulate.load = *load;
        }
        dtmpc::Harness h(cfg);
        if (*synth) {
            std::optional<dtmpc::PhaseShiftCommand> tl;
            if (!timeline.empty()) tl = dtmpc::PhaseShiftCommand{timeline[0], timeline[1], timeline[2], dtmpc::Scheme::TPS};
            std::cout << "model: " << h.synth(tl).string() << "\n";
        } else if (*simulate) {
            std::cout << "trajectory: " << h.simulate().string() << "\n";
        } else if (*train) {
            const auto r = h.train_nsp(save_dataset);
            std::cout << "nsp: " << h.out("nsp.json").string() << "\n"
                      << "train mse " << r.final_train_mse << ", validation mse " << r.validation_mse << "\n";
        } else if (*eval) {
            const auto r = h.eval_nsp();
            std::cout << "per-cycle error ratio (RMS) " << r.cycle_ratio_rms << ", rollout error " << r.rollout_error
                      << "\n";
        } else if (*bench_s) {
            const auto r = h.bench_solvers();
            for (const auto& row : r.rows) {
                std::cout << row.name << ": " << row.points_per_cycle << " points/cycle, max rel error "
                          << row.max_rel_error << "\n";
            }
        } else if (*bench_o) {
            const auto r = h.bench_optimizers();
            for (const auto& row : r.rows) {
                std::cout << dtmpc::to_string(row.scheme) << " " << row.method << ": " << row.evaluations
                          << " evals, cost " << row.final_cost << ", evals to target " << row.evals_to_target << "\n";
            }
        } else if (*scen) {
            const auto r = h.run_scenarios();
            for (const auto& s : r) {
                std::cout << s.scenario << " " << s.controller << ": settling " << s.summary.settling_cycles
                          << " cycles, steady i_pp " << s.summary.i_pp_steady << " A\n";
            }
        } else if (*report) {
            h.report();
            print_report_summary(h);
        }
        return kOk;
    } catch (const dtmpc::MissingArtifactError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMissing;
    } catch (const dtmpc::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInput;
    } catch (const dtmpc::TopologyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInput;
    } catch (const dtmpc::NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
}
