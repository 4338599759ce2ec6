#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pendcbc {

/// Physical constants of the pendulum rig. The excitation amplitude p is
/// deliberately not a member: it is the continuation parameter and travels
/// separately through every interface that needs it.
struct PendulumParams {
    double mass = 1.0;        // kg
    double length = 0.2;      // m, pivot to bob
    double damping = 0.02;    // N m s, viscous coefficient at the pivot
    double gravity = 9.81;    // m s^-2
    double omega = 6.0 * std::numbers::pi;  // rad s^-1, excitation frequency
    double period = 1.0 / 3.0;              // s, always 2*pi/omega

    /// Rig with the values frozen by the calibration sweep (see
    /// data/calibration.json and the calibrate subcommand).
    static PendulumParams calibrated() { return PendulumParams{}; }

    static PendulumParams with_omega(double omega_) {
        PendulumParams p;
        p.omega = omega_;
        p.period = 2.0 * std::numbers::pi / omega_;
        p.validate();
        return p;
    }

    void validate() const {
        if (!(mass > 0.0) || !(length > 0.0) || !(damping >= 0.0) ||
            !(gravity > 0.0) || !(omega > 0.0) || !(period > 0.0))
            throw std::invalid_argument("PendulumParams: non-positive entry");
        if (std::abs(period * omega - 2.0 * std::numbers::pi) > 1e-12)
            throw std::invalid_argument("PendulumParams: period*omega != 2*pi");
    }
};

}  // namespace pendcbc
