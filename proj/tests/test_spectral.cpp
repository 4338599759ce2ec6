#include "doctest.h"

#include <cmath>
#include <functional>
#include <numbers>

#include "pendcbc/spectral.hpp"

using namespace pendcbc;

namespace {
constexpr double kT = 1.0 / 3.0;

Eigen::VectorXd sampled(int n, const std::function<double(double)>& f) {
    Eigen::VectorXd y(n + 1);
    for (int j = 0; j <= n; ++j) y[j] = f(kT * j / n);
    return y;
}
}  // namespace

TEST_CASE("projecting a basis member isolates its own coefficient") {
    for (int k : {-3, -1, 0, 2}) {
        auto y = sampled(256, [&](double t) { return basis(k, t, kT); });
        auto x = project(y, 3, kT);
        for (int j = -3; j <= 3; ++j) {
            const double want = (j == k) ? 1.0 / kT : 0.0;
            CHECK(x.at(j) == doctest::Approx(want).epsilon(1e-12).scale(1.0));
        }
    }
}

TEST_CASE("round-trip gain is one single constant across modes") {
    // project(reconstruct(e_k)) = gain * e_k; the gain must not depend on k.
    const int N = 5;
    for (int k = -N; k <= N; ++k) {
        SpectralCoeffs unit;
        unit.order = N;
        unit.period = kT;
        unit.coeffs.setZero(2 * N + 1);
        unit.at(k) = 1.0;
        auto y = sampled(256, [&](double t) { return reconstruct(unit, t); });
        auto back = project(y, N, kT);
        CHECK(std::abs(back.at(k) - projection_gain(kT)) < 1e-10);
        for (int j = -N; j <= N; ++j)
            if (j != k) CHECK(std::abs(back.at(j)) < 1e-10);
    }
}

TEST_CASE("gain-corrected round trip reproduces band-limited signals") {
    auto f = [](double t) {
        return 0.7 - 1.3 * basis(-2, t, kT) + 0.25 * basis(1, t, kT) +
               0.05 * basis(3, t, kT);
    };
    auto x = project(sampled(512, f), 4, kT);
    for (double t : {0.0, 0.02, 0.1234, kT * 0.999}) {
        CHECK(kT * reconstruct(x, t) / 1.0 ==
              doctest::Approx(f(t) * kT * projection_gain(kT)).epsilon(1e-10));
        // equivalently: reconstruct/gain gives the signal back
        CHECK(reconstruct(x, t) / projection_gain(kT) ==
              doctest::Approx(f(t)).epsilon(1e-10));
    }
}

TEST_CASE("synthesis derivative matches finite differences") {
    SpectralCoeffs x;
    x.order = 3;
    x.period = kT;
    x.coeffs.setZero(7);
    x.at(-2) = 0.4;
    x.at(1) = -1.1;
    x.at(3) = 0.2;
    const double d = 1e-7;
    for (double t : {0.01, 0.1, 0.27}) {
        const double fd = (reconstruct(x, t + d) - reconstruct(x, t - d)) / (2 * d);
        CHECK(reconstruct_dot(x, t) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("too few samples for the order is rejected") {
    auto y = sampled(10, [](double t) { return t; });  // 11 samples
    CHECK_THROWS_AS(project(y, 2, kT), std::invalid_argument);  // needs 12
    CHECK_NOTHROW(project(y, 1, kT));
}

TEST_CASE("constant mode stores the scaled mean") {
    auto y = sampled(64, [](double) { return 2.5; });
    auto x = project(y, 0, kT);
    // coefficient = sqrt(1/T) * mean; synthesis returns the mean scaled by
    // the round-trip gain
    CHECK(x.at(0) == doctest::Approx(std::sqrt(1.0 / kT) * 2.5).epsilon(1e-13));
    CHECK(reconstruct(x, 0.1) / projection_gain(kT) ==
          doctest::Approx(2.5).epsilon(1e-13));
}
