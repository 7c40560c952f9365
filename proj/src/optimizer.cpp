#include "dtmpc/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace dtmpc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

void OptimizeBudget::validate() const {
    if (max_cost_evals < 0 || max_iterations < 0) throw InputError("budgets must be non-negative");
}

void SsoConfig::validate() const {
    if (!(sigma > 0.0)) throw InputError("sigma must be positive");
    if (!(rho > 0.0 && rho < 1.0)) throw InputError("rho must lie in (0,1)");
    if (!(initial_scale > 0.0)) throw InputError("initial scale must be positive");
    if (!(min_scale > 0.0)) throw InputError("minimum scale must be positive");
}

std::string_view to_string(Termination t) {
    switch (t) {
        case Termination::Budget: return "budget";
        case Termination::Iterations: return "iterations";
        case Termination::ScaleUnderflow: return "scale_underflow";
    }
    return "unknown";
}

void write_trace_csv(std::ostream& os, const std::vector<TraceEntry>& trace) {
    const Eigen::Index n = trace.empty() ? 0 : trace.front().u.size();
    os << "iter,eval";
    for (Eigen::Index i = 0; i < n; ++i) os << ",U" << i;
    os << ",J,phase,scale,threshold,accepted\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const auto& e : trace) {
        os << e.iter << ',' << e.eval;
        for (Eigen::Index i = 0; i < e.u.size(); ++i) os << ',' << num(e.u[i]);
        os << ',' << num(e.cost) << ',' << e.phase << ',' << num(e.scale) << ',' << num(e.threshold)
           << ',' << (e.accepted ? 1 : 0) << '\n';
    }
}

std::vector<Vec> positive_basis(int n) {
    if (n < 1) throw InputError("dimension must be >= 1");
    std::vector<Vec> dirs;
    for (int i = 0; i < n; ++i) dirs.push_back(Vec::Unit(n, i));
    dirs.push_back(Vec::Constant(n, -1.0 / std::sqrt(static_cast<double>(n))));
    return dirs;
}

Vec clamp_to_box(const Vec& u) { return u.cwiseMax(0.0).cwiseMin(1.0); }

void Simplex::sort() {
    std::vector<std::size_t> idx(vertices.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (costs[a] != costs[b]) return costs[a] < costs[b];
        return std::lexicographical_compare(vertices[a].data(), vertices[a].data() + vertices[a].size(),
                                            vertices[b].data(), vertices[b].data() + vertices[b].size());
    });
    std::vector<Vec> v;
    std::vector<double> c;
    for (auto i : idx) {
        v.push_back(vertices[i]);
        c.push_back(costs[i]);
    }
    vertices = std::move(v);
    costs = std::move(c);
}

Vec centroid(const Simplex& s) {
    if (s.vertices.size() < 2) throw InputError("simplex needs at least two vertices");
    Vec c = Vec::Zero(s.vertices.front().size());
    for (std::size_t i = 0; i + 1 < s.vertices.size(); ++i) c += s.vertices[i];
    return c / static_cast<double>(s.vertices.size() - 1);
}

Evaluator::Evaluator(CostFunction f, int max_evals, std::vector<TraceEntry>* trace)
    : f_(std::move(f)), max_(max_evals), trace_(trace) {}

bool Evaluator::evaluate(const Vec& u, int iter, const std::string& phase, double scale,
                         double& cost) {
    if (exhausted()) return false;
    if (((u.array() < 0.0) || (u.array() > 1.0)).any()) {
        throw InputError("optimizer evaluated a point outside the unit box");
    }
    cost = f_(u);
    ++count_;
    if (!std::isfinite(cost)) {
        std::ostringstream os;
        os.precision(12);
        os << "non-finite cost at U = [";
        for (Eigen::Index i = 0; i < u.size(); ++i) os << (i ? ", " : "") << u[i];
        os << "]";
        throw NumericalError(os.str());
    }
    if (trace_) trace_->push_back({iter, count_, u, cost, phase, scale, kNaN, false});
    return true;
}

TraceEntry* Evaluator::last() { return trace_ && !trace_->empty() ? &trace_->back() : nullptr; }

std::size_t Evaluator::trace_size() const { return trace_ ? trace_->size() : 0; }

TraceEntry* Evaluator::entry(std::size_t index) {
    return trace_ && index < trace_->size() ? &(*trace_)[index] : nullptr;
}

bool init_simplex(Simplex& s, const Vec& u0, double u0_cost, Evaluator& ev, const std::string& phase) {
    const auto n = u0.size();
    s.vertices.assign(1, u0);
    s.costs.assign(1, u0_cost);
    for (Eigen::Index i = 0; i < n; ++i) {
        Vec v = u0;
        v[i] = (u0[i] + s.scale <= 1.0) ? u0[i] + s.scale : u0[i] - s.scale;
        v = clamp_to_box(v);
        double c = 0.0;
        if (!ev.evaluate(v, s.iteration, phase, s.scale, c)) {
            s.eval_count = ev.count();
            s.sort();
            return false;
        }
        s.vertices.push_back(v);
        s.costs.push_back(c);
    }
    s.eval_count = ev.count();
    s.sort();
    return true;
}

bool sso_step(Simplex& s, Evaluator& ev, const SsoConfig& cfg) {
    const int n = s.dim();
    if (static_cast<int>(s.vertices.size()) != n + 1) throw InputError("simplex must have n+1 vertices");
    ++s.iteration;
    const int iter = s.iteration;
    const double thr = s.costs.front() - cfg.sigma * s.scale * s.scale;
    auto eval = [&](const Vec& u, const char* phase, double& c) {
        const bool ok = ev.evaluate(u, iter, phase, s.scale, c);
        if (ok && ev.last()) ev.last()->threshold = thr;
        s.eval_count = ev.count();
        return ok;
    };
    auto accept = [&](const Vec& u, double c, TraceEntry* entry) {
        s.vertices.back() = u;
        s.costs.back() = c;
        if (entry) entry->accepted = true;
        s.poll_index = -1;
        s.sort();
    };
    // Trace positions rather than pointers: the trace may reallocate.
    auto mark = [&]() { return ev.trace_size() - 1; };
    if (s.poll_index < 0) {
        const Vec uc = centroid(s);
        const Vec& un = s.vertices.back();
        const Vec ur = clamp_to_box(uc + (uc - un));
        double jr = 0.0;
        if (!eval(ur, "reflect", jr)) return false;
        const std::size_t r_mark = mark();
        Vec cand = ur;
        double jc = jr;
        std::size_t c_mark = r_mark;
        if (jr < s.costs.front()) {
            const Vec ue = clamp_to_box(uc + 2.0 * (ur - uc));
            double je = 0.0;
            if (!eval(ue, "expand", je)) return false;
            if (je < jr) {
                cand = ue;
                jc = je;
                c_mark = mark();
            }
        } else if (jr < s.costs[static_cast<std::size_t>(n - 1)]) {
            // reflection candidate
        } else {
            cand = jr < s.costs.back() ? Vec(clamp_to_box(uc + 0.5 * (ur - uc)))
                                       : Vec(clamp_to_box(uc - 0.5 * (uc - un)));
            if (!eval(cand, "contract", jc)) return false;
            c_mark = mark();
        }
        if (jc <= thr) {
            accept(cand, jc, ev.entry(c_mark));
            return true;
        }
        s.poll_index = 0;
    }

    const auto basis = positive_basis(n);
    const Vec p = clamp_to_box(s.vertices.front() + s.scale * basis[static_cast<std::size_t>(s.poll_index)]);
    double jp = 0.0;
    if (!eval(p, "poll", jp)) return false;
    if (jp <= thr) {
        accept(p, jp, ev.last());
        return true;
    }
    ++s.poll_index;
    if (s.poll_index <= n) return true;

    // Full poll cycle failed.
    s.poll_index = -1;
    s.scale *= cfg.rho;
    const Vec u0 = s.vertices.front();
    const double j0 = s.costs.front();
    return init_simplex(s, u0, j0, ev, "shrink");
}

namespace {

void check_start(const Vec& u) {
    if (u.size() < 1) throw InputError("start point must have at least one component");
    if (!u.allFinite() || ((u.array() < 0.0) || (u.array() > 1.0)).any()) {
        throw InputError("start point must lie in [0,1]^n");
    }
}

OptimizeResult empty_result(const Vec& start) {
    OptimizeResult r;
    r.best = start;
    r.best_cost = std::numeric_limits<double>::infinity();
    return r;
}

}  // namespace

OptimizeResult optimize_sso(const CostFunction& f, const Vec& warm_start, const SsoConfig& cfg,
                            const OptimizeBudget& budget) {
    cfg.validate();
    budget.validate();
    check_start(warm_start);
    OptimizeResult res = empty_result(warm_start);
    if (budget.max_cost_evals == 0) return res;
    Evaluator ev(f, budget.max_cost_evals, &res.trace);
    Simplex s;
    s.scale = cfg.initial_scale;
    double j0 = 0.0;
    ev.evaluate(warm_start, 0, "init", s.scale, j0);
    res.best_cost = j0;
    bool ok = init_simplex(s, warm_start, j0, ev, "init");
    res.termination = Termination::Budget;
    while (ok) {
        if (s.iteration >= budget.max_iterations) {
            res.termination = Termination::Iterations;
            break;
        }
        if (s.scale < cfg.min_scale) {
            res.termination = Termination::ScaleUnderflow;
            break;
        }
        ok = sso_step(s, ev, cfg);
        res.best_history.push_back(s.costs.front());
    }
    res.best = s.vertices.front();
    res.best_cost = s.costs.front();
    res.evaluations = ev.count();
    res.iterations = s.iteration;
    return res;
}

GridStepResult grid_search_step(Evaluator& ev, const Vec& center, double center_cost, double step,
                                int iter, bool& complete) {
    if (!(step > 0.0)) throw InputError("grid step must be positive");
    const auto n = center.size();
    int total = 1;
    for (Eigen::Index i = 0; i < n; ++i) total *= 3;
    GridStepResult r{center, center_cost, step, 0, false};
    Vec best = center;
    double best_cost = center_cost;
    complete = true;
    for (int code = 0; code < total; ++code) {
        Vec offset(n);
        int c = code;
        bool is_center = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            offset[i] = static_cast<double>(c % 3 - 1);
            if (c % 3 != 1) is_center = false;
            c /= 3;
        }
        if (is_center) continue;
        const Vec u = clamp_to_box(center + step * offset);
        double j = 0.0;
        if (!ev.evaluate(u, iter, "grid", step, j)) {
            complete = false;
            break;
        }
        ++r.evals;
        if (j < best_cost) {
            best_cost = j;
            best = u;
        }
    }
    if (best_cost < center_cost) {
        r.center = best;
        r.center_cost = best_cost;
        r.moved = true;
    } else {
        r.step = 0.5 * step;
    }
    return r;
}

OptimizeResult optimize_grid(const CostFunction& f, const Vec& start, const GridConfig& cfg,
                             const OptimizeBudget& budget) {
    budget.validate();
    check_start(start);
    if (!(cfg.initial_step > 0.0 && cfg.min_step > 0.0)) throw InputError("grid steps must be positive");
    OptimizeResult res = empty_result(start);
    if (budget.max_cost_evals == 0) return res;
    Evaluator ev(f, budget.max_cost_evals, &res.trace);
    double jc = 0.0;
    ev.evaluate(start, 0, "init", cfg.initial_step, jc);
    Vec center = start;
    double step = cfg.initial_step;
    int iter = 0;
    res.termination = Termination::Budget;
    while (true) {
        if (iter >= budget.max_iterations) {
            res.termination = Termination::Iterations;
            break;
        }
        if (step < cfg.min_step) {
            res.termination = Termination::ScaleUnderflow;
            break;
        }
        bool complete = true;
        const auto r = grid_search_step(ev, center, jc, step, ++iter, complete);
        center = r.center;
        jc = r.center_cost;
        res.best_history.push_back(jc);
        if (!complete) break;
        step = r.step;
    }
    res.best = center;
    res.best_cost = jc;
    res.evaluations = ev.count();
    res.iterations = iter;
    return res;
}

double adaptive_step(const AdaptiveGridConfig& cfg, double base_step, double center_cost) {
    const double raw = base_step * (1.0 + cfg.gain * std::max(0.0, center_cost - cfg.threshold));
    return std::clamp(raw, base_step, std::max(base_step, cfg.max_step));
}

OptimizeResult optimize_adaptive_grid(const CostFunction& f, const Vec& start,
                                      const AdaptiveGridConfig& cfg, const OptimizeBudget& budget) {
    budget.validate();
    check_start(start);
    if (!(cfg.base_step > 0.0 && cfg.min_step > 0.0 && cfg.max_step > 0.0 && cfg.gain >= 0.0)) {
        throw InputError("adaptive grid parameters must be positive");
    }
    OptimizeResult res = empty_result(start);
    if (budget.max_cost_evals == 0) return res;
    Evaluator ev(f, budget.max_cost_evals, &res.trace);
    double jc = 0.0;
    ev.evaluate(start, 0, "init", cfg.base_step, jc);
    Vec center = start;
    double base = cfg.base_step;
    int iter = 0;
    res.termination = Termination::Budget;
    while (true) {
        if (iter >= budget.max_iterations) {
            res.termination = Termination::Iterations;
            break;
        }
        if (base < cfg.min_step) {
            res.termination = Termination::ScaleUnderflow;
            break;
        }
        bool complete = true;
        const double step = adaptive_step(cfg, base, jc);
        const auto r = grid_search_step(ev, center, jc, step, ++iter, complete);
        center = r.center;
        jc = r.center_cost;
        res.best_history.push_back(jc);
        if (!complete) break;
        if (!r.moved) base *= 0.5;
    }
    res.best = center;
    res.best_cost = jc;
    res.evaluations = ev.count();
    res.iterations = iter;
    return res;
}

}  // namespace dtmpc
