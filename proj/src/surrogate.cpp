#include "dtmpc/surrogate.hpp"

#include "dtmpc/expm.hpp"
#include "dtmpc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

namespace dtmpc {

std::string DatasetConfig::fingerprint() const {
    std::ostringstream os;
    os.precision(17);
    os << "tps=" << tps_points << ";dps=" << dps_points << ";sps=" << sps_points << ";loads=";
    for (double l : loads) os << l << ',';
    os << ";draws=" << draws_per_point << ";lo=" << state_lo.transpose()
       << ";hi=" << state_hi.transpose() << ";T=" << period << ";dt=" << dead_time
       << ";tol=" << rel_tol << ',' << abs_tol << ";seed=" << seed;
    // FNV-1a
    std::uint64_t h = 1469598103934665603ull;
    for (char c : os.str()) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<SampledCycle> sample_cycles(const DatasetConfig& cfg) {
    if (cfg.state_lo.size() != cfg.state_hi.size()) throw InputError("state box bounds differ in size");
    if (cfg.draws_per_point < 1) throw InputError("draws_per_point must be >= 1");
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<SampledCycle> out;
    auto add = [&](const PhaseShiftCommand& cmd) {
        for (double load : cfg.loads) {
            for (int d = 0; d < cfg.draws_per_point; ++d) {
                Vec x0(cfg.state_lo.size());
                for (Eigen::Index i = 0; i < x0.size(); ++i) {
                    x0[i] = cfg.state_lo[i] + unit(rng) * (cfg.state_hi[i] - cfg.state_lo[i]);
                }
                out.push_back({cmd, load, x0});
            }
        }
    };
    auto cell = [&](int i, int n) { return (i + unit(rng)) / n; };
    for (int i = 0; i < cfg.tps_points; ++i) {
        for (int j = 0; j < cfg.tps_points; ++j) {
            for (int k = 0; k < cfg.tps_points; ++k) {
                const int n = cfg.tps_points;
                add({cell(i, n), cell(j, n), cell(k, n), Scheme::TPS});
            }
        }
    }
    for (int i = 0; i < cfg.dps_points; ++i) {
        for (int j = 0; j < cfg.dps_points; ++j) {
            const double d1 = cell(j, cfg.dps_points);
            add({cell(i, cfg.dps_points), d1, d1, Scheme::DPS});
        }
    }
    for (int i = 0; i < cfg.sps_points; ++i) add({cell(i, cfg.sps_points), 0.0, 0.0, Scheme::SPS});
    return out;
}

Vec segment_residual(const PiecewiseModel& model, const SwitchState& s, const Vec& x, const Vec& u,
                     double h, double rel_tol, double abs_tol) {
    if (!(h > 0.0)) throw InputError("segment duration must be positive");
    const auto tl = constant_timeline(s, h);
    const Vec ref = integrate_adaptive_reference(model, tl, x, u, rel_tol, abs_tol).back();
    return ref - step_euler(model.A(s), model.B(s), x, u, h);
}

ResidualDataset generate_dataset(const ModelProvider& models, const DatasetConfig& cfg) {
    ResidualDataset ds;
    ds.provenance = cfg.fingerprint();
    const auto cycles = sample_cycles(cfg);
    int cycle_id = 0;
    for (const auto& c : cycles) {
        const auto model = models(c.load);
        const Vec u = model->base().input_values;
        const auto tl = build_timeline(c.cmd, cfg.period, cfg.dead_time);
        std::vector<ResidualSample> local;
        try {
            Vec x = c.x0;
            for (std::size_t i = 0; i < tl.events.size(); ++i) {
                const SwitchState s = resolve_state(tl, tl.events[i], x);
                const double h = tl.segment_length(i);
                const auto one = constant_timeline(s, h);
                const Vec ref =
                    integrate_adaptive_reference(*model, one, x, u, cfg.rel_tol, cfg.abs_tol).back();
                const Vec euler = step_euler(model->A(s), model->B(s), x, u, h);
                local.push_back({s, x, u, h, ref - euler, c.load, cycle_id});
                x = ref;
            }
        } catch (const NumericalError&) {
            ++ds.discarded_cycles;
            continue;
        }
        for (auto& smp : local) ds.samples.push_back(std::move(smp));
        ++cycle_id;
    }
    ds.cycles = cycle_id;
    return ds;
}

void TrainConfig::validate() const {
    if (layer_widths.size() < 2) throw InputError("layer_widths needs at least two entries");
    if (!(adam.learning_rate > 0.0) || epochs < 1 || batch_size < 1) {
        throw InputError("learning_rate, epochs and batch_size must be positive");
    }
    if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0 && adam.beta2 > 0.0 && adam.beta2 < 1.0 &&
          adam.epsilon > 0.0)) {
        throw InputError("Adam moments must lie in (0,1) and epsilon must be positive");
    }
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw InputError("validation_fraction must lie in [0,1)");
    }
}

NspModel::NspModel(std::shared_ptr<const PiecewiseModel> core, std::vector<int> widths,
                   double step_reference)
    : core_(std::move(core)), widths_(std::move(widths)), step_reference_(step_reference) {
    if (!core_) throw InputError("NSP needs an Euler core model");
    if (!(step_reference > 0.0)) throw InputError("step_reference must be positive");
    const int m = core_->state_dim();
    if (widths_.front() != m + 1 || widths_.back() != m) {
        throw InputError("network widths must be {m+1, ..., m} for the model's state dimension");
    }
}

NspModel NspModel::with_core(std::shared_ptr<const PiecewiseModel> core) const {
    if (!core || core->state_dim() != core_->state_dim()) {
        throw InputError("replacement core has a different state dimension");
    }
    NspModel copy = *this;
    copy.core_ = std::move(core);
    return copy;
}

const StateNet& NspModel::net(const SwitchState& s) const {
    auto it = nets_.find(s);
    if (it == nets_.end()) throw InputError("no residual network for switching state '" + s.str() + "'");
    return it->second;
}

void NspModel::set_net(const SwitchState& s, StateNet net) {
    if (net.net.widths() != widths_) throw InputError("network widths do not match the model");
    nets_[s] = std::move(net);
}

void NspModel::zero_networks() {
    for (auto& [s, n] : nets_) {
        n.net.set_zero();
        n.output_norm.mean.setZero();
    }
}

namespace {

Vec net_input(const Vec& x, double h, double step_reference) {
    Vec in(x.size() + 1);
    in.head(x.size()) = x;
    in[x.size()] = h / step_reference;
    return in;
}

}  // namespace

double residual_scale(double h, double step_reference) {
    const double r = h / step_reference;
    return r * r;
}

NspModel train_nsp(const ResidualDataset& ds, const TrainConfig& cfg,
                   std::shared_ptr<const PiecewiseModel> core, TrainReport* report,
                   const std::vector<SwitchState>& required) {
    cfg.validate();
    if (ds.samples.empty()) throw InputError("empty dataset");
    const int m = static_cast<int>(ds.samples.front().x.size());
    double h_sum = 0.0;
    for (const auto& s : ds.samples) h_sum += s.h;
    const double step_reference = h_sum / static_cast<double>(ds.samples.size());
    NspModel nsp(std::move(core), cfg.layer_widths, step_reference);
    nsp.provenance = ds.provenance;

    // Split by cycle id.
    int max_cycle = 0;
    for (const auto& s : ds.samples) max_cycle = std::max(max_cycle, s.cycle);
    std::vector<int> cycle_ids(static_cast<std::size_t>(max_cycle) + 1);
    std::iota(cycle_ids.begin(), cycle_ids.end(), 0);
    std::mt19937_64 split_rng(cfg.seed ^ 0x5bd1e995ull);
    std::shuffle(cycle_ids.begin(), cycle_ids.end(), split_rng);
    const auto n_val = static_cast<std::size_t>(
        std::floor(cfg.validation_fraction * static_cast<double>(cycle_ids.size())));
    std::vector<char> is_val(cycle_ids.size(), 0);
    for (std::size_t i = 0; i < n_val; ++i) is_val[static_cast<std::size_t>(cycle_ids[i])] = 1;

    std::map<SwitchState, std::vector<std::size_t>> train_idx, val_idx;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        (is_val[static_cast<std::size_t>(s.cycle)] ? val_idx : train_idx)[s.state].push_back(i);
    }
    for (const auto& s : required) {
        if (train_idx.count(s) == 0) {
            throw InputError("no training samples for switching state '" + s.str() + "'");
        }
    }

    TrainReport rep;
    double weighted_train = 0.0, weighted_val = 0.0;
    int total_train = 0, total_val = 0;
    for (const auto& [state, idx] : train_idx) {
        const auto n = static_cast<Eigen::Index>(idx.size());
        Mat xin(m + 1, n), yout(m, n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto& s = ds.samples[idx[static_cast<std::size_t>(k)]];
            xin.col(k) = net_input(s.x, s.h, step_reference);
            yout.col(k) = s.residual / residual_scale(s.h, step_reference);
        }
        StateNet sn{FeedForwardNet(cfg.layer_widths), Normalizer::fit(xin), Normalizer::fit(yout)};
        const Mat xn = sn.input_norm.normalize_columns(xin);
        const Mat yn = sn.output_norm.normalize_columns(yout);

        std::mt19937_64 rng(cfg.seed + 0x9e3779b97f4a7c15ull * (state.bits() + 1));
        sn.net.init_glorot(rng);
        AdamOptimizer adam(sn.net, cfg.adam);
        StateTrainReport sr;
        sr.state = state;
        sr.train_samples = static_cast<int>(n);

        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        NetGradients grad;
        Mat bx, by;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            double epoch_loss = 0.0;
            for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
                const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, n - start);
                bx.resize(m + 1, len);
                by.resize(m, len);
                for (Eigen::Index k = 0; k < len; ++k) {
                    const auto col = order[static_cast<std::size_t>(start + k)];
                    bx.col(k) = xn.col(col);
                    by.col(k) = yn.col(col);
                }
                const double loss = sn.net.loss_and_gradient(bx, by, grad);
                if (!std::isfinite(loss)) {
                    throw NumericalError("training diverged for state '" + state.str() + "'");
                }
                epoch_loss += loss * static_cast<double>(len);
                adam.step(sn.net, grad);
            }
            // Per-output MSE, averaged over samples.
            sr.epoch_loss.push_back(epoch_loss / static_cast<double>(n) / m);
        }
        if (!sn.net.all_finite()) throw NumericalError("non-finite weights for state '" + state.str() + "'");
        sr.final_train_mse = sn.net.loss(xn, yn) / m;

        auto vit = val_idx.find(state);
        if (vit != val_idx.end()) {
            const auto nv = static_cast<Eigen::Index>(vit->second.size());
            Mat vx(m + 1, nv), vy(m, nv);
            for (Eigen::Index k = 0; k < nv; ++k) {
                const auto& s = ds.samples[vit->second[static_cast<std::size_t>(k)]];
                vx.col(k) = net_input(s.x, s.h, step_reference);
                vy.col(k) = s.residual / residual_scale(s.h, step_reference);
            }
            sr.validation_samples = static_cast<int>(nv);
            sr.validation_mse = sn.net.loss(sn.input_norm.normalize_columns(vx),
                                            sn.output_norm.normalize_columns(vy)) / m;
        }
        weighted_train += sr.final_train_mse * sr.train_samples;
        weighted_val += sr.validation_mse * sr.validation_samples;
        total_train += sr.train_samples;
        total_val += sr.validation_samples;
        rep.states.push_back(std::move(sr));
        nsp.set_net(state, std::move(sn));
    }
    rep.final_train_mse = total_train > 0 ? weighted_train / total_train : 0.0;
    rep.validation_mse = total_val > 0 ? weighted_val / total_val : 0.0;
    if (report) *report = std::move(rep);
    return nsp;
}

Vec predict_segment(const NspModel& nsp, const Vec& x, const Vec& u, const SwitchState& s,
                    double h) {
    if (!(h > 0.0)) throw InputError("segment duration must be positive");
    const StateNet& sn = nsp.net(s);
    const PiecewiseModel& core = nsp.core();
    const Vec euler = step_euler(core.A(s), core.B(s), x, u, h);
    const Vec z = sn.net.forward(sn.input_norm.normalize(net_input(x, h, nsp.step_reference())));
    return euler + residual_scale(h, nsp.step_reference()) * sn.output_norm.denormalize(z);
}

namespace {

template <typename Step>
CyclePrediction chain(const SwitchTimeline& tl, const Vec& x0, Step&& step) {
    CyclePrediction out;
    out.timeline = tl;
    out.states.reserve(tl.events.size() + 1);
    out.states.push_back(x0);
    Vec x = x0;
    for (std::size_t i = 0; i < tl.events.size(); ++i) {
        const SwitchState s = resolve_state(tl, tl.events[i], x);
        x = step(s, x, tl.segment_length(i));
        if (!x.allFinite()) throw NumericalError("prediction became non-finite");
        out.active.push_back(s);
        out.states.push_back(x);
        ++out.net_evaluations;
    }
    return out;
}

}  // namespace

CyclePrediction predict_cycle(const NspModel& nsp, const Vec& x0, const Vec& u,
                              const PhaseShiftCommand& cmd, double period, double dead_time) {
    const auto tl = build_timeline(cmd, period, dead_time);
    return chain(tl, x0, [&](const SwitchState& s, const Vec& x, double h) {
        return predict_segment(nsp, x, u, s, h);
    });
}

CyclePrediction predict_cycle_euler(const PiecewiseModel& model, const Vec& x0, const Vec& u,
                                    const PhaseShiftCommand& cmd, double period,
                                    double dead_time) {
    const auto tl = build_timeline(cmd, period, dead_time);
    auto out = chain(tl, x0, [&](const SwitchState& s, const Vec& x, double h) {
        return step_euler(model.A(s), model.B(s), x, u, h);
    });
    out.net_evaluations = 0;
    return out;
}

CyclePrediction simulate_cycle(const PiecewiseModel& model, const Vec& x0, const Vec& u,
                               const PhaseShiftCommand& cmd, double period, double dead_time) {
    const auto tl = build_timeline(cmd, period, dead_time);
    auto out = chain(tl, x0, [&](const SwitchState& s, const Vec& x, double h) {
        return SegmentPropagator(model.A(s), model.B(s) * u, h).apply(x);
    });
    out.net_evaluations = 0;
    return out;
}

}  // namespace dtmpc
