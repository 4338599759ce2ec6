#include "doctest.h"

#include <cmath>
#include <numbers>

#include "pendcbc/pendulum.hpp"

using namespace pendcbc;

namespace {

PendulumParams rig() {
    PendulumParams par;
    par.mass = 1.0;
    par.length = 0.25;
    par.damping = 0.1;
    par.gravity = 9.81;
    return par;  // omega stays 6*pi, period 1/3
}

// Plain RK4 on a 2d system, local to the test so the checks do not depend on
// the library's integrator.
template <typename Rhs>
Eigen::Vector2d step_rk4(const Rhs& f, Eigen::Vector2d y, double t, double dt) {
    Eigen::Vector2d k1 = f(y, t);
    Eigen::Vector2d k2 = f(y + 0.5 * dt * k1, t + 0.5 * dt);
    Eigen::Vector2d k3 = f(y + 0.5 * dt * k2, t + 0.5 * dt);
    Eigen::Vector2d k4 = f(y + dt * k3, t + dt);
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

TEST_CASE("lab-frame acceleration, excitation crossing zero") {
    // At t = 0 the excitation term vanishes, so with theta = pi/2 and the bob
    // at rest the only torque is gravity: theta_dd = -g/l = -39.24 exactly.
    auto par = rig();
    Eigen::Vector2d y(std::numbers::pi / 2.0, 0.0);
    Eigen::Vector2d dy = rhs_lab(y, 0.0, par, 0.02);
    CHECK(dy[0] == 0.0);
    CHECK(dy[1] == doctest::Approx(-39.24).epsilon(1e-13));
}

TEST_CASE("lab-frame acceleration, general point") {
    // Longhand transliteration of the equation of motion, kept separate from
    // the library implementation on purpose.
    auto par = rig();
    const double theta = 0.3, theta_dot = 1.2, p = 0.01;
    const double t = par.period / 4.0;  // omega*t = pi/2, excitation maximal
    const double g_eff =
        par.gravity + par.omega * par.omega * p * std::sin(par.omega * t);
    const double expected =
        -(par.damping * theta_dot +
          par.mass * par.length * g_eff * std::sin(theta)) /
        (par.mass * par.length * par.length);
    Eigen::Vector2d dy = rhs_lab({theta, theta_dot}, t, par, p);
    CHECK(dy[0] == doctest::Approx(theta_dot));
    CHECK(dy[1] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("rotating frame equals lab frame shifted by omega*t") {
    auto par = rig();
    const double p = 0.015;
    const double dt = par.period / 512.0;

    auto lab = [&](const Eigen::Vector2d& y, double t) {
        return rhs_lab(y, t, par, p);
    };
    auto rot = [&](const Eigen::Vector2d& y, double t) {
        return rhs_rotating({y[0], y[1], t}, par, p);
    };

    Eigen::Vector2d y_lab(0.4, par.omega);        // theta, theta_dot
    Eigen::Vector2d y_rot(0.4, 0.0);              // phi = theta - omega*t
    double t = 0.0;
    for (int i = 0; i < 10 * 512; ++i) {
        y_lab = step_rk4(lab, y_lab, t, dt);
        y_rot = step_rk4(rot, y_rot, t, dt);
        t += dt;
    }
    CHECK(y_lab[0] == doctest::Approx(y_rot[0] + par.omega * t).epsilon(1e-10));
    CHECK(y_lab[1] == doctest::Approx(y_rot[1] + par.omega).epsilon(1e-9));
}

TEST_CASE("rotating acceleration matches slope of the velocity trace") {
    auto par = rig();
    const double p = 0.012;
    auto rot = [&](const Eigen::Vector2d& y, double t) {
        return rhs_rotating({y[0], y[1], t}, par, p);
    };
    Eigen::Vector2d y(-2.0, 0.3);
    double t = 0.2;
    const double dt = 1e-5;
    Eigen::Vector2d fwd = step_rk4(rot, y, t, dt);
    Eigen::Vector2d bwd = step_rk4(rot, y, t, -dt);
    const double slope = (fwd[1] - bwd[1]) / (2.0 * dt);
    CHECK(slope ==
          doctest::Approx(rhs_rotating({y[0], y[1], t}, par, p)[1]).epsilon(1e-6));
}

TEST_CASE("unforced pendulum dissipates energy") {
    auto par = rig();
    auto lab = [&](const Eigen::Vector2d& y, double t) {
        return rhs_lab(y, t, par, 0.0);
    };
    auto energy = [&](const Eigen::Vector2d& y) {
        return 0.5 * par.mass * par.length * par.length * y[1] * y[1] -
               par.mass * par.gravity * par.length * std::cos(y[0]);
    };
    Eigen::Vector2d y(2.5, 0.0);
    double t = 0.0, prev = energy(y);
    const double dt = par.period / 512.0;
    for (int i = 0; i < 5 * 512; ++i) {
        y = step_rk4(lab, y, t, dt);
        t += dt;
        const double e = energy(y);
        CHECK(e <= prev + 1e-12);
        prev = e;
    }
}

TEST_CASE("variational coefficients match finite differences") {
    auto par = rig();
    const double p = 0.011, phi = -2.7, phi_dot = 0.4, t = 0.13;
    const double d = 1e-6;
    auto acc = [&](double ph, double pd_, double pp) {
        return rhs_rotating({ph, pd_, t}, par, pp)[1];
    };
    CHECK(rotating_accel_dphi(phi, t, par, p) ==
          doctest::Approx((acc(phi + d, phi_dot, p) - acc(phi - d, phi_dot, p)) /
                          (2.0 * d))
              .epsilon(1e-6));
    CHECK(rotating_accel_dphi_dot(par) ==
          doctest::Approx((acc(phi, phi_dot + d, p) - acc(phi, phi_dot - d, p)) /
                          (2.0 * d))
              .epsilon(1e-6));
    CHECK(rotating_accel_dp(phi, t, par) ==
          doctest::Approx((acc(phi, phi_dot, p + d) - acc(phi, phi_dot, p - d)) /
                          (2.0 * d))
              .epsilon(1e-5));
}

TEST_CASE("pd torque basics") {
    auto par = rig();
    CHECK(pd_torque(0.3, -1.0, par, 0.0) == 0.0);
    CHECK(pd_torque(0.0, 0.0, par, 7.0) == 0.0);
    // -m l G u with the derivative part off
    CHECK(pd_torque(0.2, 0.0, par, 4.0, 0.0) ==
          doctest::Approx(-1.0 * 0.25 * 4.0 * 0.2));
    const double a = pd_torque(0.1, 0.5, par, 3.0);
    CHECK(pd_torque(0.2, 1.0, par, 3.0) == doctest::Approx(2.0 * a));
    // default derivative weight is one half
    CHECK(pd_torque(0.0, 1.0, par, 2.0) ==
          doctest::Approx(pd_torque(0.5, 0.0, par, 2.0)));
}
