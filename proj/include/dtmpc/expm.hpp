#pragma once

#include "dtmpc/core.hpp"

namespace dtmpc {

/// Matrix exponential by [6/6] Padé approximation with scaling and squaring.
/// Throws NumericalError when the input is not finite.
Mat expm(const Mat& a);

/// Exact propagator of dx/dt = A x + b over `dt` with constant b:
///     x(dt) = e^{A dt} x + ∫_0^dt e^{A s} ds b,
/// computed from the exponential of the augmented matrix [[A, b], [0, 0]] so that a
/// singular A needs no special handling. A == 0 short-circuits to x + dt b.
class SegmentPropagator {
public:
    SegmentPropagator(const Mat& a, const Vec& b, double dt);

    [[nodiscard]] Vec apply(const Vec& x) const { return phi_ * x + gamma_; }
    [[nodiscard]] const Mat& phi() const { return phi_; }
    [[nodiscard]] const Vec& gamma() const { return gamma_; }

private:
    Mat phi_;
    Vec gamma_;
};

}  // namespace dtmpc
