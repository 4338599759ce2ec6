#pragma once

#include <Eigen/Core>

#include "pendcbc/params.hpp"

namespace pendcbc {

/// Plant state in the rotating frame phi = theta - omega*t.
/// phi is kept unwrapped: a clean rotation is a bounded phi, a dropped
/// rotation shows up as phi drifting by -omega per second.
struct PlantState {
    double phi = 0.0;
    double phi_dot = 0.0;
    double t = 0.0;
};

/// Lab-frame dynamics of the parametrically excited pendulum,
///   m l^2 theta'' + b theta' + m l (g + omega^2 p sin(omega t)) sin(theta) = 0,
/// with an optional external torque on the right hand side.
/// state = (theta, theta_dot), p >= 0 is the pivot excitation amplitude.
Eigen::Vector2d rhs_lab(const Eigen::Vector2d& state, double t,
                        const PendulumParams& par, double p,
                        double torque = 0.0);

/// Same dynamics written in the rotating frame,
///   m l^2 phi'' + b phi' + b omega
///     + m l (g + omega^2 p sin(omega t)) sin(phi + omega t) = torque.
Eigen::Vector2d rhs_rotating(const PlantState& state, const PendulumParams& par,
                             double p, double torque = 0.0);

/// d(phi_ddot)/d(phi) of the rotating-frame dynamics, for variational and
/// Floquet integrations.
double rotating_accel_dphi(double phi, double t, const PendulumParams& par,
                           double p);

/// d(phi_ddot)/d(phi_dot); constant in state.
double rotating_accel_dphi_dot(const PendulumParams& par);

/// d(phi_ddot)/dp at fixed state.
double rotating_accel_dp(double phi, double t, const PendulumParams& par);

/// Proportional-plus-derivative actuation torque
///   PD[u] = -m l G (u + ratio * u_dot).
/// The derivative weight ratio is 0.5 unless a config overrides it.
double pd_torque(double u, double u_dot, const PendulumParams& par, double gain,
                 double deriv_ratio = 0.5);

}  // namespace pendcbc
