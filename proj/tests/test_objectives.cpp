#include "dtmpc/objectives.hpp"
#include "dtmpc/surrogate.hpp"

#include <catch_amalgamated.hpp>

#include "helpers.hpp"

#include <cmath>
#include <random>

using namespace dtmpc;

namespace {

CostSpec unit_spec() {
    CostSpec s;
    s.w_ipp = 0.5;
    s.w_zvs = 0.5;
    s.gate_midpoint = 1.0;
    s.gate_sharpness = 10.0;
    return s;
}

}  // namespace

TEST_CASE("peak-to-peak current from event samples", "[objectives]") {
    const auto tl = build_timeline({0.3, 0.2, 0.1, Scheme::TPS}, 10e-6, 0.0);
    REQUIRE(tl.events.size() == 8);
    std::vector<Vec> states(9, Eigen::Vector3d(0.0, 48.0, 24.0));
    const double samples[] = {-10, 4, 10, -4, 0, 1, 2, 3, -1};
    for (int k = 0; k < 9; ++k) states[static_cast<std::size_t>(k)][0] = samples[k];
    const auto m = extract_metrics(tl, states, CostSpec{});
    CHECK(m.i_pp == 20.0);
    CHECK(m.i_peak == 10.0);
    CHECK(m.i_pp <= 2.0 * m.i_peak);
    CHECK(m.v_out == 24.0);
    CHECK(m.v_track_err == 0.0);
    CHECK(m.turn_on_events == 8);
    CHECK_THROWS_AS(extract_metrics(tl, std::vector<Vec>(3, Vec::Zero(3)), CostSpec{}), InputError);
}

TEST_CASE("zvs deficit is a clamped shortfall", "[objectives]") {
    const auto tl = build_timeline({0.3, 0.2, 0.1, Scheme::TPS}, 10e-6, 0.0);
    const CostSpec spec;
    std::vector<Vec> states(9, Eigen::Vector3d(0.0, 48.0, 24.0));
    // Every transition commutated with a 10 A margin.
    for (std::size_t k = 0; k < tl.events.size(); ++k) {
        REQUIRE(tl.events[k].transitions.size() == 1);
        const auto tr = tl.events[k].transitions.front();
        const auto& leg = tl.layout.legs[static_cast<std::size_t>(tr.leg)];
        states[k][0] = (tr.rising ? 1.0 : -1.0) * leg.current_sign * (spec.i_min + 10.0);
    }
    CHECK(extract_metrics(tl, states, spec).zvs_deficit == 0.0);
    CHECK(extract_metrics(tl, states, spec).zvs_satisfied == 8);
    // Zero current at every turn-on: shortfall i_min each.
    for (auto& x : states) x[0] = 0.0;
    CHECK(extract_metrics(tl, states, spec).zvs_deficit == Catch::Approx(8 * spec.i_min));
    CHECK(extract_metrics(tl, states, spec).zvs_satisfied == 0);
    // Wrong-direction current adds its magnitude.
    states[0][0] = -5.0 * tl.layout.legs[static_cast<std::size_t>(tl.events[0].transitions[0].leg)].current_sign *
                   (tl.events[0].transitions[0].rising ? 1.0 : -1.0);
    CHECK(extract_metrics(tl, states, spec).zvs_deficit == Catch::Approx(8 * spec.i_min + 5.0));
}

TEST_CASE("tracking error vanishes at the reference steady state", "[objectives]") {
    const auto model = testing_support::dab_model();
    const Vec u = model.base().input_values;
    const PhaseShiftCommand cmd{0.25, 0.0, 0.0, Scheme::SPS};
    Vec x = Eigen::Vector3d(0.0, 48.0, 0.0);
    for (int k = 0; k < 20000; ++k) {
        const Vec next = simulate_cycle(model, x, u, cmd, 10e-6).x_end();
        const bool done = (next - x).norm() < 1e-9;
        x = next;
        if (done) break;
    }
    const auto cyc = simulate_cycle(model, x, u, cmd, 10e-6);
    CostSpec spec;
    spec.v_ref = x[2];
    const auto m = extract_metrics(cyc.timeline, cyc.states, spec);
    CHECK(m.v_track_err < 1e-6);
    CHECK(m.i_pp > 0.0);
    CHECK(m.i_pp <= 2.0 * m.i_peak);
    // Buck-mode SPS at full load commutates both primary legs softly.
    double primary_deficit = 0.0;
    for (std::size_t k = 0; k < cyc.timeline.events.size(); ++k) {
        for (const auto& tr : cyc.timeline.events[k].transitions) {
            if (tr.leg > 1) continue;
            const auto& leg = cyc.timeline.layout.legs[static_cast<std::size_t>(tr.leg)];
            const double into = leg.current_sign * cyc.states[k][0];
            primary_deficit += std::max(0.0, spec.i_min - (tr.rising ? into : -into));
        }
    }
    CHECK(primary_deficit == 0.0);
}

TEST_CASE("gate values", "[objectives]") {
    const auto spec = unit_spec();
    CHECK(gate(1.0, spec) == 0.5);
    CHECK(gate(0.0, spec) == Catch::Approx(1.0 - 1.0 / (1.0 + std::exp(10.0))).epsilon(1e-14));
    CHECK(gate(0.0, spec) == Catch::Approx(0.99995).margin(1e-6));
    CHECK(gate(2.0, spec) < 5e-5);
    CHECK(gate(1e6, spec) >= 0.0);
    CHECK(gate(-1e6, spec) <= 1.0);
    const CostSpec def;
    CHECK(gate(8.0 / 24.0, def) < 0.05);
    CHECK(gate(0.2 / 24.0, def) > 0.95);
}

TEST_CASE("gated cost arithmetic", "[objectives]") {
    const auto spec = unit_spec();
    // Independent evaluation: S = 1 - 1/(1 + exp(-10 (0.1 - 1))).
    const double s = 1.0 - 1.0 / (1.0 + std::exp(-10.0 * (0.1 - 1.0)));
    const double expected = 0.1 + s * (0.5 * 2.0 + 0.5 * 1.0);
    CHECK(std::abs(gated_cost(0.1, 2.0, 1.0, spec) - expected) < 1e-12);

    CostSpec zero = spec;
    zero.w_ipp = 0.0;
    zero.w_zvs = 0.0;
    CHECK(gated_cost(0.37, 5.0, 3.0, zero) == 0.37);

    const double big = 3.0;  // gate < 1e-4
    REQUIRE(gate(big, spec) < 1e-4);
    CHECK(std::abs(gated_cost(big, 2.0, 1.0, spec) - big) < 1e-4 * (0.5 * 2.0 + 0.5 * 1.0));

    CycleMetrics m;
    m.v_track_err = 2.4;
    m.i_pp = 125.0;
    m.zvs_deficit = 4.0;
    m.turn_on_events = 8;
    const auto b = cost_breakdown(m, CostSpec{});
    CHECK(b.j_pri == Catch::Approx(0.1));
    CHECK(b.ipp_norm == Catch::Approx(2.0));
    CHECK(b.zvs_norm == Catch::Approx(0.25));
    CHECK(b.total == total_cost(m, CostSpec{}));
}

TEST_CASE("gate and cost properties", "[objectives][property]") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> un(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        CostSpec spec;
        spec.gate_midpoint = un(rng);
        spec.gate_sharpness = 1.0 + 200.0 * un(rng);
        spec.w_ipp = un(rng);
        spec.w_zvs = un(rng);
        const double ipp = 4.0 * un(rng);
        const double zvs = 4.0 * un(rng);
        double prev_gate = 1.0;
        double prev_cost = -1.0;
        // J is monotone in j_pri when sharpness * weighted_secondaries / 4 <= 1.
        const double w_sec = spec.w_ipp * ipp + spec.w_zvs * zvs;
        const bool monotone_regime = spec.gate_sharpness * w_sec / 4.0 <= 1.0;
        for (int k = 0; k <= 100; ++k) {
            const double j = 0.02 * k;
            const double g = gate(j, spec);
            CHECK(g >= 0.0);
            CHECK(g <= 1.0);
            CHECK(g <= prev_gate);
            const double c = gated_cost(j, ipp, zvs, spec);
            CHECK(c >= j);
            if (monotone_regime) CHECK(c >= prev_cost);
            prev_gate = g;
            prev_cost = c;
        }
        CHECK(gate(0.0, spec) > gate(1e3, spec));
    }
}

TEST_CASE("cost spec validation", "[objectives]") {
    CostSpec s;
    CHECK_NOTHROW(s.validate());
    s.w_ipp = -1.0;
    CHECK_THROWS_AS(s.validate(), InputError);
    s = CostSpec{};
    s.gate_sharpness = 0.0;
    CHECK_THROWS_AS(s.validate(), InputError);
    s = CostSpec{};
    s.i_min = 0.0;
    CHECK_THROWS_AS(s.validate(), InputError);
}
