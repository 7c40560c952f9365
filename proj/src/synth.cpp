#include "dtmpc/synth.hpp"

#include <map>
#include <optional>

namespace dtmpc {

Vec BaseModel::gains(const SwitchState& s) const {
    if (s.size() != switch_count()) {
        throw InputError("switch state '" + s.str() + "' has wrong length for this model");
    }
    Vec k(switch_count());
    for (int j = 0; j < switch_count(); ++j) k[j] = s.on(j) ? switch_gain[j] : 0.0;
    return k;
}

namespace {

/// MNA description of the resistive companion network: inductors become current
/// sources of value i_L, capacitors become voltage sources of value v_C.
struct Companion {
    Mat G;   // n_z x n_z
    Mat Sx;  // n_z x m
    Mat Su;  // n_z x p
    Mat Sw;  // n_z x N (switch injections, base mode only)
    Mat Px;  // m x n_z (state derivative readout)
    Mat Q;   // N x n_z (switch voltage readout)
    std::vector<std::string> state_labels;
    std::vector<std::string> input_labels;
    std::vector<std::string> switch_ids;
    Vec input_values;
    Vec switch_gain;
};

/// When `resolved` is set every switch is stamped at its state conductance; otherwise
/// at its off conductance with an injection column.
Companion build_companion(const Netlist& net, const std::optional<SwitchState>& resolved) {
    const auto nodes = net.node_names();
    std::map<std::string, int> node_index;
    for (std::size_t i = 0; i < nodes.size(); ++i) node_index[nodes[i]] = static_cast<int>(i);
    auto idx = [&](const std::string& n) -> int {
        if (n == net.ground) return -1;
        return node_index.at(n);
    };

    Companion c;
    int n_extra = 0;
    std::vector<const Branch*> inductors, capacitors, switches;
    int n_inputs = 0;
    for (const auto& b : net.branches) {
        switch (b.kind) {
            case BranchKind::Inductor: inductors.push_back(&b); break;
            case BranchKind::Capacitor:
                capacitors.push_back(&b);
                ++n_extra;
                break;
            case BranchKind::VoltageSource:
                ++n_extra;
                ++n_inputs;
                break;
            case BranchKind::CurrentSource: ++n_inputs; break;
            case BranchKind::Transformer: ++n_extra; break;
            case BranchKind::Switch: switches.push_back(&b); break;
            case BranchKind::Resistor: break;
        }
    }
    const int n_nodes = static_cast<int>(nodes.size());
    const int n_z = n_nodes + n_extra;
    const int m = static_cast<int>(inductors.size() + capacitors.size());
    const int n_sw = static_cast<int>(switches.size());

    if (resolved && resolved->size() != n_sw) {
        throw InputError("switch state '" + resolved->str() + "' has wrong length for netlist");
    }

    c.G = Mat::Zero(n_z, n_z);
    c.Sx = Mat::Zero(n_z, m);
    c.Su = Mat::Zero(n_z, n_inputs);
    c.Sw = Mat::Zero(n_z, resolved ? 0 : n_sw);
    c.Px = Mat::Zero(m, n_z);
    c.Q = Mat::Zero(n_sw, n_z);
    c.input_values = Vec::Zero(n_inputs);
    c.switch_gain = Vec::Zero(n_sw);

    std::map<const Branch*, int> state_of;
    for (std::size_t k = 0; k < inductors.size(); ++k) {
        state_of[inductors[k]] = static_cast<int>(k);
        c.state_labels.push_back("i_" + inductors[k]->id);
    }
    for (std::size_t k = 0; k < capacitors.size(); ++k) {
        state_of[capacitors[k]] = static_cast<int>(inductors.size() + k);
        c.state_labels.push_back("v_" + capacitors[k]->id);
    }

    auto stamp_conductance = [&](int a, int b, double g) {
        if (a >= 0) c.G(a, a) += g;
        if (b >= 0) c.G(b, b) += g;
        if (a >= 0 && b >= 0) {
            c.G(a, b) -= g;
            c.G(b, a) -= g;
        }
    };
    // Current flowing from a to b through the element leaves a and enters b.
    auto stamp_current = [&](Mat& S, int col, int a, int b, double sign) {
        if (a >= 0) S(a, col) -= sign;
        if (b >= 0) S(b, col) += sign;
    };
    auto stamp_branch_var = [&](int row, int a, int b) {
        if (a >= 0) {
            c.G(a, row) += 1.0;
            c.G(row, a) += 1.0;
        }
        if (b >= 0) {
            c.G(b, row) -= 1.0;
            c.G(row, b) -= 1.0;
        }
    };

    int extra = n_nodes;
    int input = 0;
    int sw = 0;
    for (const auto& br : net.branches) {
        const int a = idx(br.nodes[0]);
        const int b = idx(br.nodes[1]);
        switch (br.kind) {
            case BranchKind::Resistor: stamp_conductance(a, b, 1.0 / br.value); break;
            case BranchKind::Switch: {
                const double g_off = br.off_conductance;
                const double g_on = br.on_conductance;
                c.switch_gain[sw] = g_on - g_off;
                c.switch_ids.push_back(br.id);
                const double g = resolved ? (resolved->on(sw) ? g_on : g_off) : g_off;
                stamp_conductance(a, b, g);
                if (!resolved) stamp_current(c.Sw, sw, a, b, 1.0);
                if (a >= 0) c.Q(sw, a) += 1.0;
                if (b >= 0) c.Q(sw, b) -= 1.0;
                ++sw;
                break;
            }
            case BranchKind::Inductor: {
                const int k = state_of.at(&br);
                stamp_current(c.Sx, k, a, b, 1.0);
                if (a >= 0) c.Px(k, a) += 1.0 / br.value;
                if (b >= 0) c.Px(k, b) -= 1.0 / br.value;
                break;
            }
            case BranchKind::Capacitor: {
                const int k = state_of.at(&br);
                const int row = extra++;
                stamp_branch_var(row, a, b);
                c.Sx(row, k) = 1.0;
                c.Px(k, row) = 1.0 / br.value;
                break;
            }
            case BranchKind::VoltageSource: {
                const int row = extra++;
                stamp_branch_var(row, a, b);
                c.Su(row, input) = 1.0;
                c.input_values[input] = br.value;
                c.input_labels.push_back(br.id);
                ++input;
                break;
            }
            case BranchKind::CurrentSource: {
                stamp_current(c.Su, input, a, b, 1.0);
                c.input_values[input] = br.value;
                c.input_labels.push_back(br.id);
                ++input;
                break;
            }
            case BranchKind::Transformer: {
                // Branch variable j: primary current p+ -> p-. Secondary carries -N j
                // from s+ to s-. Constraint: v_p - N v_s = 0.
                const int row = extra++;
                const int sa = idx(br.nodes[2]);
                const int sb = idx(br.nodes[3]);
                const double n = br.value;
                if (a >= 0) c.G(a, row) += 1.0;
                if (b >= 0) c.G(b, row) -= 1.0;
                if (sa >= 0) c.G(sa, row) -= n;
                if (sb >= 0) c.G(sb, row) += n;
                if (a >= 0) c.G(row, a) += 1.0;
                if (b >= 0) c.G(row, b) -= 1.0;
                if (sa >= 0) c.G(row, sa) -= n;
                if (sb >= 0) c.G(row, sb) += n;
                break;
            }
        }
    }
    return c;
}

Eigen::FullPivLU<Mat> factor(const Mat& G) {
    Eigen::FullPivLU<Mat> lu(G);
    if (lu.rank() < G.rows()) {
        throw TopologyError(
            "singular network: capacitor/voltage-source loop, inductor/current-source cutset, "
            "or floating node");
    }
    return lu;
}

}  // namespace

BaseModel synthesize_base(const Netlist& net) {
    const Companion c = build_companion(net, std::nullopt);
    const auto lu = factor(c.G);
    const Mat Xx = lu.solve(c.Sx);
    const Mat Xu = lu.solve(c.Su);
    const Mat Xw = lu.solve(c.Sw);

    BaseModel base;
    base.A0 = c.Px * Xx;
    base.Bu = c.Px * Xu;
    base.Bs = c.Px * Xw;
    base.E = c.Q * Xx;
    base.Gu = c.Q * Xu;
    base.Fs = c.Q * Xw;
    base.switch_gain = c.switch_gain;
    base.input_values = c.input_values;
    base.state_labels = c.state_labels;
    base.input_labels = c.input_labels;
    base.switch_ids = c.switch_ids;
    return base;
}

DirectModel synthesize_direct(const Netlist& net, const SwitchState& s) {
    const Companion c = build_companion(net, s);
    const auto lu = factor(c.G);
    return {c.Px * lu.solve(c.Sx), c.Px * lu.solve(c.Su)};
}

const Mat& IncrementLUT::at(const SwitchState& s) const {
    auto it = index_.find(s);
    if (it == index_.end()) throw InputError("switching state '" + s.str() + "' not in LUT");
    return entries_[it->second];
}

void IncrementLUT::insert(const SwitchState& s, Mat m) {
    auto it = index_.find(s);
    if (it != index_.end()) {
        entries_[it->second] = std::move(m);
        return;
    }
    index_.emplace(s, states_.size());
    states_.push_back(s);
    entries_.push_back(std::move(m));
}

IncrementLUT precompute_lut(const BaseModel& base, const std::vector<SwitchState>& states) {
    IncrementLUT lut;
    const int n = base.switch_count();
    for (const auto& s : states) {
        if (lut.contains(s)) continue;
        const Vec k = base.gains(s);
        if (n == 0) {
            lut.insert(s, base.Bs);
            continue;
        }
        // I - K Fs: row scaling of Fs by the diagonal K.
        const Mat lhs = Mat::Identity(n, n) - k.asDiagonal() * base.Fs;
        Eigen::FullPivLU<Mat> lu(lhs);
        if (lu.rank() < n) {
            throw NumericalError("I - K(s) Fs is singular for switching state '" + s.str() + "'");
        }
        // M = Bs (I - K Fs)^-1  <=>  (I - K Fs)^T M^T = Bs^T
        Eigen::FullPivLU<Mat> lut_t(lhs.transpose());
        Mat m = lut_t.solve(base.Bs.transpose()).transpose();
        lut.insert(s, std::move(m));
    }
    return lut;
}

PiecewiseModel::PiecewiseModel(BaseModel base, IncrementLUT lut)
    : base_(std::move(base)), lut_(std::move(lut)) {
    a_cache_.reserve(lut_.size());
    b_cache_.reserve(lut_.size());
    for (const auto& s : lut_.reachable_states()) {
        Mat a = assemble_A(s);
        if (!a.allFinite()) throw NumericalError("assembled A is not finite for '" + s.str() + "'");
        a_cache_.push_back(std::move(a));
        b_cache_.push_back(assemble_B(s));
    }
}

Mat PiecewiseModel::assemble_A(const SwitchState& s) const {
    const Mat& m = lut_.at(s);
    const Vec k = base_.gains(s);
    // (M K) E, K diagonal: scale columns of M.
    return base_.A0 + (m * k.asDiagonal()) * base_.E;
}

Mat PiecewiseModel::assemble_B(const SwitchState& s) const {
    const Mat& m = lut_.at(s);
    const Vec k = base_.gains(s);
    return base_.Bu + (m * k.asDiagonal()) * base_.Gu;
}

std::size_t PiecewiseModel::slot(const SwitchState& s) const {
    const auto& states = lut_.reachable_states();
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (states[i] == s) return i;
    }
    throw InputError("switching state '" + s.str() + "' not in LUT");
}

const Mat& PiecewiseModel::A(const SwitchState& s) const { return a_cache_[slot(s)]; }
const Mat& PiecewiseModel::B(const SwitchState& s) const { return b_cache_[slot(s)]; }

PiecewiseModel compile_model(const Netlist& net, const std::vector<SwitchState>& states) {
    BaseModel base = synthesize_base(net);
    IncrementLUT lut = precompute_lut(base, states);
    return {std::move(base), std::move(lut)};
}

}  // namespace dtmpc
