#pragma once

#include <Eigen/Core>

namespace pendcbc {

/// Truncated Fourier description of a period-long signal. Coefficients are
/// stored for k = -N..N at position k+N, in the non-unitary normalization of
/// the projection below: negative k tags cosines, positive k sines, k = 0 the
/// constant mode.
struct SpectralCoeffs {
    int order = 0;
    double period = 0.0;
    Eigen::VectorXd coeffs;  // size 2*order+1

    double& at(int k) { return coeffs[k + order]; }
    double at(int k) const { return coeffs[k + order]; }
};

/// Basis member evaluated as a function of time over one period:
///   k = 0:  sqrt(1/T)
///   k > 0:  sqrt(2/T) sin(2 pi k t / T)
///   k < 0:  sqrt(2/T) cos(2 pi k t / T)
double basis(int k, double t, double period);

/// Coefficient-wise projection (1/T) * integral of basis(k) times the signal
/// over one period. `samples` holds uniform samples at j*T/n for j = 0..n,
/// both endpoints included; composite trapezoid quadrature. The sample count
/// must be at least 4N+4 or the projection would alias.
SpectralCoeffs project(const Eigen::VectorXd& samples, int order,
                       double period);

/// Pointwise synthesis sum x_k basis(k, t).
double reconstruct(const SpectralCoeffs& x, double t);

/// Derivative of the synthesis in t.
double reconstruct_dot(const SpectralCoeffs& x, double t);

/// Composition gain of project(reconstruct(.)): the basis normalization above
/// is not unitary, so the round trip scales every mode by the same constant
/// (1/T). Blocks that need a true projection multiply by period once.
double projection_gain(double period);

}  // namespace pendcbc
