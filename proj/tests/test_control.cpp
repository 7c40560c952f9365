#include "dtmpc/control.hpp"

#include <catch_amalgamated.hpp>

#include "helpers.hpp"

#include <cmath>
#include <sstream>

using namespace dtmpc;

namespace {

constexpr double kPeriod = 10e-6;

ModelCache& dab_cache() {
    static ModelCache cache(parse_netlist(default_dab_netlist()), "RLOAD");
    return cache;
}

/// Surrogate whose residual networks are identically zero (pure Euler predictor).
NspModel euler_nsp(double load = 0.576) {
    NspModel nsp(dab_cache().get(load), {4, 32, 32, 3}, 1e-6);
    for (const auto& s : reachable_states(default_dab_layout())) {
        StateNet n{FeedForwardNet({4, 32, 32, 3}), Normalizer::identity(4), Normalizer::identity(3)};
        nsp.set_net(s, std::move(n));
    }
    nsp.zero_networks();
    return nsp;
}

CycleRecord record(int cycle, double v_out, double v_ref, double gate_value, double ipp) {
    CycleRecord r;
    r.cycle = cycle;
    r.v_ref = v_ref;
    r.metrics.v_out = v_out;
    r.metrics.v_track_err = std::abs(v_out - v_ref);
    r.metrics.i_pp = ipp;
    r.metrics.i_peak = ipp / 2;
    r.metrics.turn_on_events = 8;
    r.metrics.zvs_satisfied = 6;
    r.cost.gate = gate_value;
    return r;
}

}  // namespace

TEST_CASE("schedules are piecewise constant", "[control]") {
    const Schedule s{{0, 1.0}, {5, 2.0}, {9, 3.0}};
    CHECK(schedule_value(s, 0) == 1.0);
    CHECK(schedule_value(s, 4) == 1.0);
    CHECK(schedule_value(s, 5) == 2.0);
    CHECK(schedule_value(s, 8) == 2.0);
    CHECK(schedule_value(s, 1000) == 3.0);
    CHECK_THROWS_AS(schedule_value({}, 0), InputError);

    Scenario sc;
    sc.name = "x";
    sc.duration_cycles = 3;
    sc.v_ref = {{0, 24.0}};
    sc.load = {{0, 1.0}};
    sc.initial_state = Vec::Zero(3);
    CHECK_NOTHROW(sc.validate());
    sc.load = {{1, 1.0}};
    CHECK_THROWS_AS(sc.validate(), InputError);
    sc.load = {{0, 1.0}, {0, 2.0}};
    CHECK_THROWS_AS(sc.validate(), InputError);
    sc.load = {{0, -1.0}};
    CHECK_THROWS_AS(sc.validate(), InputError);
    sc.load = {{0, 1.0}};
    sc.duration_cycles = -1;
    CHECK_THROWS_AS(sc.validate(), InputError);
}

TEST_CASE("zero-input plant stays at rest", "[control]") {
    ModelCache cache(parse_netlist(default_dab_netlist()).with_value("V1", 0.0), "RLOAD");
    Plant plant(cache, kPeriod);
    const Vec x0 = Vec::Zero(3);
    const auto cyc = plant.advance(x0, {0.3, 0.2, 0.1, Scheme::TPS}, 0.576);
    CHECK(cyc.x_end() == x0);
    CHECK_THROWS_AS(plant.advance(x0, {0.3, 0.2, 0.1, Scheme::TPS}, 0.0), InputError);
}

TEST_CASE("periodic steady state is a fixed point of the cycle map", "[control]") {
    const auto model = dab_cache().get(1.92);
    const PhaseShiftCommand cmd{0.2, 0.1, 0.15, Scheme::TPS};
    const Vec iterated = periodic_steady_state(*model, cmd, Eigen::Vector3d(0.0, 48.0, 0.0), kPeriod);
    const Vec again = plant_advance(*model, iterated, cmd, kPeriod);
    CHECK((again - iterated).norm() < 1e-6 * 50);
    const Vec solved = solve_periodic_steady_state(*model, cmd, kPeriod);
    CHECK((plant_advance(*model, solved, cmd, kPeriod) - solved).norm() < 1e-6);
    CHECK((solved - iterated).cwiseAbs().maxCoeff() < 1e-3);
    CHECK_THROWS_AS(periodic_steady_state(*model, cmd, Eigen::Vector3d(0.0, 48.0, 0.0), kPeriod, 0.0, 1e-6, 3),
                    NumericalError);
}

TEST_CASE("SPS operating point hits the target voltage", "[control]") {
    const auto model = dab_cache().get(0.576);
    const auto op = sps_operating_point(*model, 24.0, kPeriod);
    CHECK(op.d0 > 0.0);
    CHECK(op.d0 < 0.5);
    CHECK(std::abs(op.state[2] - 24.0) < 1e-6);
    // Independent check: the steady state of the returned command.
    const Vec x = solve_periodic_steady_state(*model, {op.d0, 0.0, 0.0, Scheme::SPS}, kPeriod);
    CHECK(std::abs(x[2] - 24.0) < 1e-6);
    CHECK_THROWS_AS(sps_operating_point(*model, 400.0, kPeriod), InputError);
}

TEST_CASE("load changes affect only later cycles", "[control]") {
    const DabParameters p;
    auto sc = load_step_scenario(dab_cache(), p, 1.0, 1.0, 24.0, 4, 4);
    PiController a({0.1, 1000.0}, kPeriod);
    PiController b({0.1, 1000.0}, kPeriod);
    Plant plant(dab_cache(), kPeriod);
    const auto base = run_scenario(plant, a, sc, CostSpec{});
    sc.load = {{0, p.load_for_fraction(1.0)}, {4, p.load_for_fraction(0.5)}};
    const auto changed = run_scenario(plant, b, sc, CostSpec{});
    REQUIRE(base.records.size() == 8);
    for (int c = 0; c < 4; ++c) CHECK(base.records[c].x_end == changed.records[c].x_end);
    CHECK(base.records[4].x_end != changed.records[4].x_end);
    // The unchanged run sits at its steady state.
    for (const auto& r : base.records) CHECK(std::abs(r.metrics.v_out - 24.0) < 1e-5);
}

TEST_CASE("PI control law", "[control]") {
    PiController pi({0.05, 2000.0}, kPeriod);
    pi.reset({0.2, 0.0, 0.0, Scheme::SPS}, 1.0);
    SECTION("zero error keeps the output") {
        for (int k = 0; k < 5; ++k) CHECK(pi.update(24.0, 24.0) == Catch::Approx(0.2).epsilon(1e-15));
        CHECK(pi.integral() == 0.2);
    }
    SECTION("sustained positive error drives the output to the clamp") {
        double prev = 0.0;
        int k = 0;
        for (; k < 1000 && pi.output() < 0.5; ++k) {
            const double u = pi.update(23.0, 24.0);
            CHECK(u >= prev);
            prev = u;
        }
        CHECK(k < 1000);
        CHECK(pi.output() == 0.5);
        // Anti-windup: the integral does not grow while clamped.
        const double frozen = pi.integral();
        for (int j = 0; j < 100; ++j) pi.update(23.0, 24.0);
        CHECK(pi.integral() == frozen);
        CHECK(frozen <= 0.5 - 0.05 * 1.0 + 1e-15);
        // A reversed error leaves the clamp at once.
        CHECK(pi.update(25.0, 24.0) < 0.5);
    }
    SECTION("the integral advances exactly up to the clamp") {
        // kp e = 0.05, integral candidate overshoots the upper clamp by 0.27.
        PiController big({0.05, 30000.0}, kPeriod);
        big.reset({0.4, 0.0, 0.0, Scheme::SPS}, 1.0);
        CHECK(big.update(23.0, 24.0) == 0.5);
        CHECK(big.integral() == Catch::Approx(0.45));
    }
    SECTION("commands are SPS") {
        const auto c = pi.step(Eigen::Vector3d(0.0, 48.0, 20.0), 24.0);
        CHECK(c.scheme == Scheme::SPS);
        CHECK(c.d1 == 0.0);
        CHECK(c.d2 == 0.0);
    }
    CHECK_THROWS_AS(PiController({-1.0, 0.0}, kPeriod), InputError);
    CHECK_THROWS_AS(PiController({0.1, 1.0}, kPeriod, 0.5, 0.4), InputError);
}

TEST_CASE("step-response tuning matches the steady-state gain", "[control]") {
    const auto model = dab_cache().get(0.576);
    const auto t = tune_pi_step_response(*model, 24.0, 0.02, kPeriod);
    const auto op = sps_operating_point(*model, 24.0, kPeriod);
    const Vec hi = solve_periodic_steady_state(*model, {op.d0 + 0.02, 0.0, 0.0, Scheme::SPS}, kPeriod);
    CHECK(t.process_gain == Catch::Approx((hi[2] - 24.0) / 0.02).epsilon(1e-6));
    CHECK(t.time_constant > 0.0);
    CHECK(t.dead_time == kPeriod);
    // SIMC with closed-loop time constant = dead time.
    const double kc = t.time_constant / (t.process_gain * 2.0 * kPeriod);
    CHECK(t.gains.kp == Catch::Approx(kc));
    CHECK(t.gains.ki == Catch::Approx(kc / std::min(t.time_constant, 8.0 * kPeriod)));
}

TEST_CASE("MPC step honours the evaluation budget and warm start", "[control]") {
    CostSpec cost;
    MpcConfig cfg;
    DtMpcController mpc(euler_nsp(), dab_cache(), cost, cfg, kPeriod);
    const auto op = sps_operating_point(*dab_cache().get(0.576), 24.0, kPeriod);
    mpc.reset({op.d0, 0.0, 0.0, Scheme::SPS}, 0.576);
    const int n = 3;
    Vec x = op.state;
    PhaseShiftCommand prev = mpc.previous_best();
    CHECK(prev.d0 == Catch::Approx(op.d0));
    Plant plant(dab_cache(), kPeriod);
    for (int k = 0; k < 20; ++k) {
        const auto cmd = mpc.step(x, 24.0);
        const auto& res = mpc.last_result();
        CHECK(mpc.last_evaluations() <= 9 * (n + 2) + (n + 1));
        CHECK(res.iterations <= 9);
        REQUIRE(!res.trace.empty());
        // First evaluation is the previous cycle's command.
        const Vec first = res.trace.front().u;
        CHECK(std::abs(first[0] * cfg.d0_max - prev.d0) < 1e-12);
        CHECK(std::abs(first[1] - prev.d1) < 1e-12);
        CHECK(std::abs(first[2] - prev.d2) < 1e-12);
        CHECK(cmd.d0 >= 0.0);
        CHECK(cmd.d0 <= cfg.d0_max);
        CHECK_NOTHROW(validate(cmd));
        prev = cmd;
        x = plant.advance(x, cmd, 0.576).x_end();
    }
    CHECK_THROWS_AS(mpc.step(Vec::Zero(2), 24.0), InputError);
}

TEST_CASE("MPC command is a fixed point at a frozen state", "[control][property]") {
    MpcConfig cfg;
    cfg.estimate_load = false;
    DtMpcController mpc(euler_nsp(), dab_cache(), CostSpec{}, cfg, kPeriod);
    const auto op = sps_operating_point(*dab_cache().get(0.576), 24.0, kPeriod);
    mpc.reset({op.d0, 0.0, 0.0, Scheme::SPS}, 0.576);
    PhaseShiftCommand a;
    PhaseShiftCommand b = mpc.step(op.state, 24.0);
    for (int k = 0; k < 300; ++k) {
        a = b;
        b = mpc.step(op.state, 24.0);
    }
    CHECK(std::abs(a.d0 - b.d0) < cfg.sso.min_scale);
    CHECK(std::abs(a.d1 - b.d1) < cfg.sso.min_scale);
    CHECK(std::abs(a.d2 - b.d2) < cfg.sso.min_scale);
    CHECK(mpc.predicted_cost(op.state, b, 24.0) <= mpc.predicted_cost(op.state, {op.d0, 0, 0, Scheme::TPS}, 24.0));
}

TEST_CASE("load observer recovers a stepped load", "[control]") {
    // Euler core on both sides of the comparison: the observer sees its own model.
    MpcConfig cfg;
    DtMpcController mpc(euler_nsp(), dab_cache(), CostSpec{}, cfg, kPeriod);
    const auto op = sps_operating_point(*dab_cache().get(0.576), 24.0, kPeriod);
    mpc.reset({op.d0, 0.0, 0.0, Scheme::SPS}, 0.576);
    CHECK(mpc.load_estimate() == Catch::Approx(0.576).epsilon(0.01));
    const auto truth = euler_nsp(2.0);
    Vec x = op.state;
    for (int k = 0; k < 6; ++k) {
        const auto cmd = mpc.step(x, 24.0);
        x = predict_cycle(truth, x, truth.core().base().input_values, cmd, kPeriod).x_end();
    }
    mpc.step(x, 24.0);
    CHECK(mpc.load_estimate() == Catch::Approx(2.0).epsilon(0.05));
}

TEST_CASE("summary follows the settling rule", "[control]") {
    std::vector<CycleRecord> rs;
    // Step at cycle 2; in band from cycle 5 except a blip at 7; settled from 8.
    const double v[] = {24.0, 24.0, 27.0, 26.0, 25.0, 24.2, 24.1, 25.0, 24.3, 24.2, 24.0, 23.9, 24.1, 24.0};
    for (int c = 0; c < 14; ++c) rs.push_back(record(c, v[c], 24.0, c < 5 ? 0.01 : (c == 13 ? 0.5 : 0.95), 10.0 + c));
    const auto s = summarize(rs, 2, CostSpec{});
    CHECK(s.settled);
    CHECK(s.settling_cycles == 7);  // cycle 8 is the 7th cycle from the step
    CHECK(s.settled_window == 6);
    CHECK(s.max_voltage_deviation == Catch::Approx(3.0));
    CHECK(s.max_i_L == Catch::Approx((10.0 + 13) / 2));
    CHECK(s.i_pp_steady == Catch::Approx((18 + 19 + 20 + 21 + 22 + 23) / 6.0));
    CHECK(s.gate_post_step_max == Catch::Approx(0.01));
    CHECK(s.gate_settled_fraction == Catch::Approx(5.0 / 6.0));
    CHECK(s.zvs_events_satisfied == 6);
    CHECK(s.zvs_events_total == 8);

    // Never settles: settling counts every post-step cycle.
    for (auto& r : rs) r.metrics.v_out = 30.0;
    const auto never = summarize(rs, 2, CostSpec{});
    CHECK_FALSE(never.settled);
    CHECK(never.settling_cycles == 12);
    CHECK(never.i_pp_steady == 0.0);
}

TEST_CASE("zero-duration scenario gives empty records", "[control]") {
    const DabParameters p;
    auto sc = load_step_scenario(dab_cache(), p, 1.0, 0.1, 24.0, 0, 0);
    PiController pi({0.1, 1000.0}, kPeriod);
    Plant plant(dab_cache(), kPeriod);
    const auto r = run_scenario(plant, pi, sc, CostSpec{});
    CHECK(r.records.empty());
    CHECK(r.summary.settling_cycles == 0);
    CHECK(r.summary.max_voltage_deviation == 0.0);
    CHECK(r.summary.i_pp_steady == 0.0);
    CHECK(r.summary.zvs_events_satisfied == 0);
}

TEST_CASE("voltage step runs to completion with bounded commands", "[control]") {
    const DabParameters p;
    const auto sc = voltage_step_scenario(dab_cache(), p, 0.3, 16.0, 32.0, 3, 60);
    CHECK(sc.load.front().second == Catch::Approx(1.92));
    const auto model = dab_cache().get(1.92);
    const auto t = tune_pi_step_response(*model, 24.0, 0.02, kPeriod);
    PiController pi(t.gains, kPeriod);
    Plant plant(dab_cache(), kPeriod);
    const auto r = run_scenario(plant, pi, sc, CostSpec{});
    REQUIRE(r.records.size() == 63);
    for (const auto& rec : r.records) {
        CHECK(rec.x_end.allFinite());
        CHECK(rec.cmd.d0 >= 0.0);
        CHECK(rec.cmd.d0 <= 1.0);
    }
    CHECK(r.summary.settled);
    std::ostringstream os;
    write_scenario_csv(os, r);
    const auto text = os.str();
    CHECK(text.rfind("cycle,d0,d1,d2,iL,vC1,vC2,vref,load,J,Jpri,gate,ipp,zvs_def,evals\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 64);
}
