#include "pendcbc/pendulum.hpp"

#include <cmath>

namespace pendcbc {

Eigen::Vector2d rhs_lab(const Eigen::Vector2d& state, double t,
                        const PendulumParams& par, double p, double torque) {
    const double theta = state[0];
    const double theta_dot = state[1];
    const double g_eff =
        par.gravity + par.omega * par.omega * p * std::sin(par.omega * t);
    const double inertia = par.mass * par.length * par.length;
    const double accel = (torque - par.damping * theta_dot -
                          par.mass * par.length * g_eff * std::sin(theta)) /
                         inertia;
    return {theta_dot, accel};
}

Eigen::Vector2d rhs_rotating(const PlantState& state, const PendulumParams& par,
                             double p, double torque) {
    const double g_eff = par.gravity + par.omega * par.omega * p *
                                           std::sin(par.omega * state.t);
    const double inertia = par.mass * par.length * par.length;
    const double accel =
        (torque - par.damping * state.phi_dot - par.damping * par.omega -
         par.mass * par.length * g_eff *
             std::sin(state.phi + par.omega * state.t)) /
        inertia;
    return {state.phi_dot, accel};
}

double rotating_accel_dphi(double phi, double t, const PendulumParams& par,
                           double p) {
    const double g_eff =
        par.gravity + par.omega * par.omega * p * std::sin(par.omega * t);
    return -g_eff * std::cos(phi + par.omega * t) / par.length;
}

double rotating_accel_dphi_dot(const PendulumParams& par) {
    return -par.damping / (par.mass * par.length * par.length);
}

double rotating_accel_dp(double phi, double t, const PendulumParams& par) {
    return -par.omega * par.omega * std::sin(par.omega * t) *
           std::sin(phi + par.omega * t) / par.length;
}

double pd_torque(double u, double u_dot, const PendulumParams& par, double gain,
                 double deriv_ratio) {
    return -par.mass * par.length * gain * (u + deriv_ratio * u_dot);
}

}  // namespace pendcbc
