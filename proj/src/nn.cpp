#include "dtmpc/nn.hpp"

#include <cmath>

namespace dtmpc {

Normalizer Normalizer::fit(const Mat& data) {
    Normalizer n;
    const Eigen::Index dim = data.rows();
    const Eigen::Index count = data.cols();
    if (count == 0) return identity(static_cast<int>(dim));
    n.mean = data.rowwise().mean();
    n.scale = Vec::Ones(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        const double var = (data.row(i).array() - n.mean[i]).square().mean();
        const double sd = std::sqrt(var);
        if (sd > 1e-12 * std::max(1.0, std::abs(n.mean[i]))) n.scale[i] = sd;
    }
    return n;
}

Normalizer Normalizer::identity(int dim) { return {Vec::Zero(dim), Vec::Ones(dim)}; }

Vec Normalizer::normalize(const Vec& x) const {
    return ((x - mean).array() / scale.array()).matrix();
}

Vec Normalizer::denormalize(const Vec& z) const {
    return (z.array() * scale.array()).matrix() + mean;
}

Mat Normalizer::normalize_columns(const Mat& x) const {
    return (x.colwise() - mean).array().colwise() / scale.array();
}

FeedForwardNet::FeedForwardNet(std::vector<int> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw InputError("network needs at least an input and an output layer");
    for (int w : widths_) {
        if (w <= 0) throw InputError("layer widths must be positive");
    }
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        w_.push_back(Mat::Zero(widths_[l + 1], widths_[l]));
        b_.push_back(Vec::Zero(widths_[l + 1]));
    }
}

std::size_t FeedForwardNet::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        n += static_cast<std::size_t>(w_[l].size() + b_[l].size());
    }
    return n;
}

void FeedForwardNet::init_glorot(std::mt19937_64& rng) {
    for (std::size_t l = 0; l < w_.size(); ++l) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w_[l].rows() + w_[l].cols()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index j = 0; j < w_[l].cols(); ++j) {
            for (Eigen::Index i = 0; i < w_[l].rows(); ++i) w_[l](i, j) = dist(rng);
        }
        b_[l].setZero();
    }
}

void FeedForwardNet::set_zero() {
    for (auto& w : w_) w.setZero();
    for (auto& b : b_) b.setZero();
}

Vec FeedForwardNet::forward(const Vec& x) const {
    if (x.size() != input_dim()) throw InputError("network input has wrong width");
    Vec a = x;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        Vec z = w_[l] * a + b_[l];
        if (l + 1 < w_.size()) z = z.cwiseMax(0.0);
        a = std::move(z);
    }
    return a;
}

Mat FeedForwardNet::forward_batch(const Mat& x) const {
    if (x.rows() != input_dim()) throw InputError("network input has wrong width");
    Mat a = x;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        Mat z = (w_[l] * a).colwise() + b_[l];
        if (l + 1 < w_.size()) z = z.cwiseMax(0.0);
        a = std::move(z);
    }
    return a;
}

double FeedForwardNet::loss_and_gradient(const Mat& x, const Mat& y, NetGradients& grad) const {
    const Eigen::Index batch = x.cols();
    if (batch == 0) throw InputError("empty batch");
    if (y.rows() != output_dim() || y.cols() != batch) throw InputError("target shape mismatch");
    const std::size_t n_layers = w_.size();
    std::vector<Mat> acts;  // acts[l] = input to layer l
    acts.reserve(n_layers + 1);
    acts.push_back(x);
    for (std::size_t l = 0; l < n_layers; ++l) {
        Mat z = (w_[l] * acts.back()).colwise() + b_[l];
        if (l + 1 < n_layers) z = z.cwiseMax(0.0);
        acts.push_back(std::move(z));
    }
    const Mat diff = acts.back() - y;
    const double inv_n = 1.0 / static_cast<double>(batch);
    const double loss = diff.squaredNorm() * inv_n;

    grad.w.resize(n_layers);
    grad.b.resize(n_layers);
    Mat delta = 2.0 * inv_n * diff;
    for (std::size_t l = n_layers; l-- > 0;) {
        grad.w[l] = delta * acts[l].transpose();
        grad.b[l] = delta.rowwise().sum();
        if (l > 0) {
            Mat back = w_[l].transpose() * delta;
            // ReLU derivative from the post-activation value.
            delta = (acts[l].array() > 0.0).select(back.array(), 0.0).matrix();
        }
    }
    return loss;
}

double FeedForwardNet::loss(const Mat& x, const Mat& y) const {
    return (forward_batch(x) - y).squaredNorm() / static_cast<double>(x.cols());
}

Vec FeedForwardNet::parameters() const {
    Vec p(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        p.segment(k, w_[l].size()) = Eigen::Map<const Vec>(w_[l].data(), w_[l].size());
        k += w_[l].size();
        p.segment(k, b_[l].size()) = b_[l];
        k += b_[l].size();
    }
    return p;
}

void FeedForwardNet::set_parameters(const Vec& p) {
    if (p.size() != static_cast<Eigen::Index>(parameter_count())) {
        throw InputError("parameter vector has wrong length");
    }
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        Eigen::Map<Vec>(w_[l].data(), w_[l].size()) = p.segment(k, w_[l].size());
        k += w_[l].size();
        b_[l] = p.segment(k, b_[l].size());
        k += b_[l].size();
    }
}

Vec FeedForwardNet::flatten(const NetGradients& g) {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < g.w.size(); ++l) n += g.w[l].size() + g.b[l].size();
    Vec p(n);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        p.segment(k, g.w[l].size()) = Eigen::Map<const Vec>(g.w[l].data(), g.w[l].size());
        k += g.w[l].size();
        p.segment(k, g.b[l].size()) = g.b[l];
        k += g.b[l].size();
    }
    return p;
}

bool FeedForwardNet::all_finite() const {
    for (std::size_t l = 0; l < w_.size(); ++l) {
        if (!w_[l].allFinite() || !b_[l].allFinite()) return false;
    }
    return true;
}

AdamOptimizer::AdamOptimizer(const FeedForwardNet& net, AdamConfig cfg) : cfg_(cfg) {
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        mw_.push_back(Mat::Zero(net.weight(l).rows(), net.weight(l).cols()));
        vw_.push_back(mw_.back());
        mb_.push_back(Vec::Zero(net.bias(l).size()));
        vb_.push_back(mb_.back());
    }
}

void AdamOptimizer::step(FeedForwardNet& net, const NetGradients& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double lr = cfg_.learning_rate;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        mw_[l] = cfg_.beta1 * mw_[l] + (1.0 - cfg_.beta1) * grad.w[l];
        vw_[l] = cfg_.beta2 * vw_[l] + (1.0 - cfg_.beta2) * grad.w[l].cwiseAbs2();
        mb_[l] = cfg_.beta1 * mb_[l] + (1.0 - cfg_.beta1) * grad.b[l];
        vb_[l] = cfg_.beta2 * vb_[l] + (1.0 - cfg_.beta2) * grad.b[l].cwiseAbs2();
        net.weight(l).array() -=
            lr * (mw_[l].array() / c1) / ((vw_[l].array() / c2).sqrt() + cfg_.epsilon);
        net.bias(l).array() -=
            lr * (mb_[l].array() / c1) / ((vb_[l].array() / c2).sqrt() + cfg_.epsilon);
    }
}

}  // namespace dtmpc
