#include "pendcbc/spectral.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pendcbc {

double basis(int k, double t, double period) {
    if (k == 0) return std::sqrt(1.0 / period);
    const double amp = std::sqrt(2.0 / period);
    const double arg = 2.0 * std::numbers::pi * std::abs(k) * t / period;
    return k > 0 ? amp * std::sin(arg) : amp * std::cos(arg);
}

SpectralCoeffs project(const Eigen::VectorXd& samples, int order,
                       double period) {
    if (order < 0 || !(period > 0.0))
        throw std::invalid_argument("project: bad order or period");
    const Eigen::Index n = samples.size() - 1;  // trapezoid intervals
    if (samples.size() < 4 * order + 4)
        throw std::invalid_argument(
            "project: too few samples for the requested order");
    SpectralCoeffs out;
    out.order = order;
    out.period = period;
    out.coeffs.setZero(2 * order + 1);
    const double h = period / static_cast<double>(n);
    for (int k = -order; k <= order; ++k) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j <= n; ++j) {
            const double w = (j == 0 || j == n) ? 0.5 : 1.0;
            acc += w * basis(k, h * static_cast<double>(j), period) * samples[j];
        }
        out.at(k) = acc * h / period;
    }
    return out;
}

double reconstruct(const SpectralCoeffs& x, double t) {
    double acc = 0.0;
    for (int k = -x.order; k <= x.order; ++k)
        acc += x.at(k) * basis(k, t, x.period);
    return acc;
}

double reconstruct_dot(const SpectralCoeffs& x, double t) {
    const double two_pi = 2.0 * std::numbers::pi;
    double acc = 0.0;
    for (int k = -x.order; k <= x.order; ++k) {
        if (k == 0) continue;
        const double rate = two_pi * std::abs(k) / x.period;
        // d/dt sin -> cos, d/dt cos -> -sin; the partner lives at -k.
        acc += x.at(k) * rate * (k > 0 ? basis(-k, t, x.period)
                                       : -basis(-k, t, x.period));
    }
    return acc;
}

double projection_gain(double period) { return 1.0 / period; }

}  // namespace pendcbc
