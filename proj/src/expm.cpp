#include "dtmpc/expm.hpp"

#include <array>
#include <cmath>

namespace dtmpc {

Mat expm(const Mat& a) {
    if (a.rows() != a.cols()) throw InputError("expm requires a square matrix");
    if (!a.allFinite()) throw NumericalError("expm: matrix has non-finite entries");
    const Eigen::Index n = a.rows();
    if (n == 0) return a;

    // Scale so that ||A / 2^s||_1 <= 0.5, where the [6/6] Padé error is below 1e-18.
    const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
    int s = 0;
    if (norm > 0.5) s = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Mat x = a / std::ldexp(1.0, s);

    // c_k = (2q - k)! q! / ((2q)! k! (q - k)!), q = 6
    constexpr std::array<double, 7> c = {1.0,
                                         1.0 / 2.0,
                                         5.0 / 44.0,
                                         1.0 / 66.0,
                                         1.0 / 792.0,
                                         1.0 / 15840.0,
                                         1.0 / 665280.0};
    const Mat id = Mat::Identity(n, n);
    const Mat x2 = x * x;
    const Mat x4 = x2 * x2;
    const Mat x6 = x4 * x2;
    const Mat even = c[0] * id + c[2] * x2 + c[4] * x4 + c[6] * x6;
    const Mat odd = x * (c[1] * id + c[3] * x2 + c[5] * x4);
    Eigen::PartialPivLU<Mat> lu(even - odd);
    Mat r = lu.solve(even + odd);
    for (int i = 0; i < s; ++i) r = r * r;
    if (!r.allFinite()) throw NumericalError("expm: result overflowed");
    return r;
}

SegmentPropagator::SegmentPropagator(const Mat& a, const Vec& b, double dt) {
    const Eigen::Index m = a.rows();
    if (a.isZero(0.0)) {
        phi_ = Mat::Identity(m, m);
        gamma_ = dt * b;
        return;
    }
    Mat aug = Mat::Zero(m + 1, m + 1);
    aug.topLeftCorner(m, m) = a * dt;
    aug.topRightCorner(m, 1) = b * dt;
    const Mat e = expm(aug);
    phi_ = e.topLeftCorner(m, m);
    gamma_ = e.topRightCorner(m, 1);
}

}  // namespace dtmpc
