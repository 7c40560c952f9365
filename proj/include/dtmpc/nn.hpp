#pragma once

#include "dtmpc/core.hpp"

#include <random>
#include <vector>

namespace dtmpc {

/// Per-feature affine normalization: z = (x - mean) / scale.
struct Normalizer {
    Vec mean;
    Vec scale;

    /// Fits mean and standard deviation over the columns of `data`; features with
    /// (near) zero spread get scale 1.
    static Normalizer fit(const Mat& data);
    static Normalizer identity(int dim);

    [[nodiscard]] Vec normalize(const Vec& x) const;
    [[nodiscard]] Vec denormalize(const Vec& z) const;
    [[nodiscard]] Mat normalize_columns(const Mat& x) const;
};

/// Gradient of the loss with respect to every layer's weights and biases.
struct NetGradients {
    std::vector<Mat> w;
    std::vector<Vec> b;
};

/// Fully connected network: ReLU on hidden layers, identity output.
class FeedForwardNet {
public:
    FeedForwardNet() = default;
    explicit FeedForwardNet(std::vector<int> widths);

    [[nodiscard]] const std::vector<int>& widths() const { return widths_; }
    [[nodiscard]] int input_dim() const { return widths_.front(); }
    [[nodiscard]] int output_dim() const { return widths_.back(); }
    [[nodiscard]] std::size_t layer_count() const { return w_.size(); }
    [[nodiscard]] std::size_t parameter_count() const;

    [[nodiscard]] const Mat& weight(std::size_t layer) const { return w_[layer]; }
    [[nodiscard]] const Vec& bias(std::size_t layer) const { return b_[layer]; }
    Mat& weight(std::size_t layer) { return w_[layer]; }
    Vec& bias(std::size_t layer) { return b_[layer]; }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)), zero biases.
    void init_glorot(std::mt19937_64& rng);
    void set_zero();

    [[nodiscard]] Vec forward(const Vec& x) const;
    /// Column-wise forward pass: X is input_dim x batch.
    [[nodiscard]] Mat forward_batch(const Mat& x) const;

    /// Loss = mean over the batch columns of ||f(x) - y||^2. Fills `grad` with the
    /// analytic gradient and returns the loss.
    double loss_and_gradient(const Mat& x, const Mat& y, NetGradients& grad) const;
    [[nodiscard]] double loss(const Mat& x, const Mat& y) const;

    /// All parameters flattened layer by layer (weights column-major, then bias).
    [[nodiscard]] Vec parameters() const;
    void set_parameters(const Vec& p);
    [[nodiscard]] static Vec flatten(const NetGradients& g);

    [[nodiscard]] bool all_finite() const;

private:
    std::vector<int> widths_;
    std::vector<Mat> w_;
    std::vector<Vec> b_;
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class AdamOptimizer {
public:
    AdamOptimizer(const FeedForwardNet& net, AdamConfig cfg);
    void step(FeedForwardNet& net, const NetGradients& grad);

private:
    AdamConfig cfg_;
    long long t_ = 0;
    std::vector<Mat> mw_, vw_;
    std::vector<Vec> mb_, vb_;
};

}  // namespace dtmpc
