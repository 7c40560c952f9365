#include "dtmpc/solver.hpp"

#include "dtmpc/expm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace dtmpc {

std::string_view to_string(SolverKind kind) {
    switch (kind) {
        case SolverKind::Euler: return "euler";
        case SolverKind::RK2: return "rk2";
        case SolverKind::RK4: return "rk4";
        case SolverKind::AdaptiveReference: return "adaptive_reference";
        case SolverKind::EventDriven: return "event_driven";
    }
    return "event_driven";
}

SolverKind solver_kind_from_string(std::string_view name) {
    for (auto k : {SolverKind::Euler, SolverKind::RK2, SolverKind::RK4,
                   SolverKind::AdaptiveReference, SolverKind::EventDriven}) {
        if (to_string(k) == name) return k;
    }
    throw InputError("unknown solver kind '" + std::string(name) + "'");
}

void SolverConfig::validate() const {
    const bool fixed = kind == SolverKind::Euler || kind == SolverKind::RK2 || kind == SolverKind::RK4;
    if (fixed && !(fixed_step > 0.0)) throw InputError("fixed_step must be positive");
    if (kind == SolverKind::AdaptiveReference && !(rel_tol > 0.0 && abs_tol > 0.0)) {
        throw InputError("solver tolerances must be positive");
    }
}

Vec step_euler(const Mat& a, const Mat& b, const Vec& x, const Vec& u, double h) {
    return x + h * (a * x + b * u);
}

Vec step_rk2(const Mat& a, const Mat& b, const Vec& x, const Vec& u, double h) {
    const Vec bu = b * u;
    const Vec k1 = a * x + bu;
    const Vec k2 = a * (x + h * k1) + bu;
    return x + 0.5 * h * (k1 + k2);
}

Vec step_rk4(const Mat& a, const Mat& b, const Vec& x, const Vec& u, double h) {
    const Vec bu = b * u;
    const Vec k1 = a * x + bu;
    const Vec k2 = a * (x + 0.5 * h * k1) + bu;
    const Vec k3 = a * (x + 0.5 * h * k2) + bu;
    const Vec k4 = a * (x + h * k3) + bu;
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

namespace {

double segment_end(const SwitchTimeline& tl, std::size_t i) {
    return (i + 1 < tl.events.size()) ? tl.events[i + 1].time : tl.period;
}

void check_finite(const Vec& x, double t) {
    if (!x.allFinite()) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "non-finite state at t = %.9g s", t);
        throw NumericalError(buf);
    }
}

Trajectory start(const Vec& x0) {
    Trajectory traj;
    traj.times.push_back(0.0);
    traj.states.push_back(x0);
    traj.event_index.push_back(0);
    return traj;
}

void check_inputs(const PiecewiseModel& model, const SwitchTimeline& tl, const Vec& x0,
                  const Vec& u) {
    if (x0.size() != model.state_dim()) throw InputError("initial state has wrong dimension");
    if (u.size() != model.base().input_dim()) throw InputError("input vector has wrong dimension");
    if (tl.events.empty()) throw InputError("timeline has no events");
}

}  // namespace

std::vector<int> fixed_step_allocation(const SwitchTimeline& tl, double h) {
    if (!(h > 0.0)) throw InputError("fixed_step must be positive");
    const std::size_t n_seg = tl.events.size();
    const int total = std::max(static_cast<int>(n_seg),
                               static_cast<int>(std::ceil(tl.period / h - 1e-9)));
    std::vector<int> steps(n_seg, 1);
    std::vector<double> remainder(n_seg, 0.0);
    int used = 0;
    for (std::size_t i = 0; i < n_seg; ++i) {
        const double share = tl.segment_length(i) / tl.period * total;
        steps[i] = std::max(1, static_cast<int>(std::floor(share)));
        remainder[i] = share - std::floor(share);
        used += steps[i];
    }
    std::vector<std::size_t> order(n_seg);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; used < total; k = (k + 1) % n_seg) {
        ++steps[order[k]];
        ++used;
    }
    // Minimum-one segments may overshoot; take the excess from the longest ones.
    while (used > total) {
        auto it = std::max_element(steps.begin(), steps.end());
        if (*it <= 1) break;
        --*it;
        --used;
    }
    return steps;
}

Trajectory integrate_fixed(const PiecewiseModel& model, const SwitchTimeline& tl, const Vec& x0,
                           const Vec& u, const SolverConfig& config) {
    config.validate();
    check_inputs(model, tl, x0, u);
    using StepFn = Vec (*)(const Mat&, const Mat&, const Vec&, const Vec&, double);
    StepFn step = nullptr;
    switch (config.kind) {
        case SolverKind::Euler: step = step_euler; break;
        case SolverKind::RK2: step = step_rk2; break;
        case SolverKind::RK4: step = step_rk4; break;
        default: throw InputError("integrate_fixed requires a fixed-step solver kind");
    }
    const auto alloc = fixed_step_allocation(tl, config.fixed_step);
    Trajectory traj = start(x0);
    Vec x = x0;
    for (std::size_t i = 0; i < tl.events.size(); ++i) {
        const SwitchState s = resolve_state(tl, tl.events[i], x);
        traj.active.push_back(s);
        const Mat& a = model.A(s);
        const Mat& b = model.B(s);
        const double t0 = tl.events[i].time;
        const double t1 = segment_end(tl, i);
        const double h = (t1 - t0) / alloc[i];
        for (int k = 1; k <= alloc[i]; ++k) {
            x = step(a, b, x, u, h);
            const double t = (k == alloc[i]) ? t1 : t0 + k * h;
            check_finite(x, t);
            traj.times.push_back(t);
            traj.states.push_back(x);
            traj.active.push_back(s);
            ++traj.evaluations;
        }
        traj.active.pop_back();
        if (i + 1 < tl.events.size()) traj.event_index.push_back(traj.times.size() - 1);
    }
    traj.active.push_back(traj.active.back());
    return traj;
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace

Trajectory integrate_adaptive_reference(const PiecewiseModel& model, const SwitchTimeline& tl,
                                        const Vec& x0, const Vec& u, double rel_tol,
                                        double abs_tol) {
    if (!(rel_tol > 0.0 && abs_tol > 0.0)) throw InputError("solver tolerances must be positive");
    check_inputs(model, tl, x0, u);
    constexpr double kSafety = 0.9, kMinFactor = 0.2, kMaxFactor = 5.0;
    constexpr double kAlpha = 0.7 / 5.0, kBeta = 0.4 / 5.0;
    constexpr double kMinStep = 1e-18;

    Trajectory traj = start(x0);
    Vec x = x0;
    double h = tl.period / 100.0;
    double err_prev = 1e-4;
    for (std::size_t i = 0; i < tl.events.size(); ++i) {
        const SwitchState s = resolve_state(tl, tl.events[i], x);
        const Mat& a = model.A(s);
        const Vec bu = model.B(s) * u;
        auto f = [&](const Vec& y) -> Vec { return a * y + bu; };
        double t = tl.events[i].time;
        const double t_end = segment_end(tl, i);
        traj.active.push_back(s);
        Vec k1 = f(x);
        while (t < t_end) {
            bool clipped = false;
            double step = h;
            if (t + step >= t_end - 1e-15 * tl.period) {
                step = t_end - t;
                clipped = true;
            }
            if (step < kMinStep) throw NumericalError("adaptive step underflow below 1e-18 s");
            const Vec k2 = f(x + step * (a21 * k1));
            const Vec k3 = f(x + step * (a31 * k1 + a32 * k2));
            const Vec k4 = f(x + step * (a41 * k1 + a42 * k2 + a43 * k3));
            const Vec k5 = f(x + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
            const Vec k6 = f(x + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
            const Vec y = x + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            const Vec k7 = f(y);
            const Vec err_vec =
                step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            const Vec scale =
                (abs_tol + rel_tol * x.cwiseAbs().cwiseMax(y.cwiseAbs()).array()).matrix();
            const double err =
                std::sqrt((err_vec.array() / scale.array()).square().mean());
            if (!std::isfinite(err)) throw NumericalError("adaptive solver produced non-finite error");
            if (err <= 1.0) {
                t = clipped ? t_end : t + step;
                x = y;
                k1 = k7;
                check_finite(x, t);
                traj.times.push_back(t);
                traj.states.push_back(x);
                traj.active.push_back(s);
                ++traj.evaluations;
                const double fac =
                    kSafety * std::pow(std::max(err, 1e-10), -kAlpha) * std::pow(err_prev, kBeta);
                const double grown = step * std::clamp(fac, kMinFactor, kMaxFactor);
                // A step clipped to an event says nothing about the natural step size.
                h = clipped ? std::max(h, grown) : grown;
                err_prev = std::max(err, 1e-4);
            } else {
                ++traj.rejected;
                const double fac = kSafety * std::pow(err, -kAlpha);
                h = step * std::clamp(fac, kMinFactor, 1.0);
                if (h < kMinStep) throw NumericalError("adaptive step underflow below 1e-18 s");
            }
        }
        traj.active.pop_back();
        if (i + 1 < tl.events.size()) traj.event_index.push_back(traj.times.size() - 1);
    }
    traj.active.push_back(traj.active.back());
    return traj;
}

Trajectory integrate_event_driven(const PiecewiseModel& model, const SwitchTimeline& tl,
                                  const Vec& x0, const Vec& u) {
    check_inputs(model, tl, x0, u);
    Trajectory traj = start(x0);
    Vec x = x0;
    for (std::size_t i = 0; i < tl.events.size(); ++i) {
        const SwitchState s = resolve_state(tl, tl.events[i], x);
        const double t1 = segment_end(tl, i);
        const SegmentPropagator prop(model.A(s), model.B(s) * u, t1 - tl.events[i].time);
        x = prop.apply(x);
        check_finite(x, t1);
        traj.active.push_back(s);
        traj.times.push_back(t1);
        traj.states.push_back(x);
        ++traj.evaluations;
        if (i + 1 < tl.events.size()) traj.event_index.push_back(traj.times.size() - 1);
    }
    traj.active.push_back(traj.active.back());
    return traj;
}

Trajectory integrate(const PiecewiseModel& model, const SwitchTimeline& tl, const Vec& x0,
                     const Vec& u, const SolverConfig& config) {
    config.validate();
    switch (config.kind) {
        case SolverKind::AdaptiveReference:
            return integrate_adaptive_reference(model, tl, x0, u, config.rel_tol, config.abs_tol);
        case SolverKind::EventDriven: return integrate_event_driven(model, tl, x0, u);
        default: return integrate_fixed(model, tl, x0, u, config);
    }
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj,
                          const std::vector<std::string>& state_labels, double t0, bool header) {
    if (header) {
        os << 't';
        for (const auto& l : state_labels) os << ',' << l;
        os << ",state_bits\n";
    }
    char buf[40];
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", t0 + traj.times[i]);
        os << buf;
        for (Eigen::Index k = 0; k < traj.states[i].size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", traj.states[i][k]);
            os << ',' << buf;
        }
        os << ',' << (i < traj.active.size() ? traj.active[i].str() : std::string()) << '\n';
    }
}

}  // namespace dtmpc
