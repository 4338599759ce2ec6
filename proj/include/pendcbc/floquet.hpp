#pragma once

#include <Eigen/Core>
#include <complex>
#include <vector>

#include "pendcbc/closed_loop.hpp"
#include "pendcbc/params.hpp"

namespace pendcbc {

struct MonodromySettings {
    // History nodes per delay interval. The discrete state carries phi and
    // phi_dot on [-2T, 0] (the filter window reaches two delays back) plus,
    // under partial relaxation, the filter trace on [-T, 0].
    int mesh = 64;
    int steps_per_period = 512;  // RK4 steps for the column integrations
    // Above this dimension the spectrum comes from subspace iteration on
    // the assembled operator instead of a full Schur pass.
    int dense_dim_limit = 2048;
    int subspace_dim = 12;
    int max_iterations = 600;
    double iter_tol = 1e-12;
};

struct FloquetResult {
    Eigen::VectorXcd multipliers;  // sorted by modulus, largest first
    int dim = 0;
    bool iterative = false;
    std::complex<double> dominant() const { return multipliers[0]; }
};

/// Sensitivity of the settled per-period mean to the two experiment knobs,
/// from the periodic response of the linearized loop. `singular` marks a
/// multiplier at 1: the settled response does not exist there.
struct MeanResponse {
    double dmean_dp = 0.0;
    double dmean_dtarget = 0.0;
    bool singular = false;
};

/// One-period solution operator of the closed loop linearized about a
/// periodic rotation, discretized on history nodes. Columns are integrated
/// with the control law in its analytic form (delayed reads, sliding-window
/// projection states, filter recursion), so the spectrum is the one the
/// simulator contracts with.
class LinearizedLoop {
  public:
    /// phi_nodes: the orbit's phi at 2*steps_per_period+1 uniform times over
    /// one period (endpoints included), which puts every RK4 stage of the
    /// column integrations exactly on a sample.
    LinearizedLoop(const PendulumParams& par, const ControlConfig& cfg,
                   double p, const Eigen::VectorXd& phi_nodes,
                   const MonodromySettings& ms = {});

    int dim() const { return dim_; }
    const Eigen::MatrixXd& matrix() const { return op_; }

    /// One period of the homogeneous linearized loop.
    Eigen::VectorXd apply(const Eigen::VectorXd& state) const;

    /// One period from rest under a unit constant knob offset.
    Eigen::VectorXd forced_period(bool amplitude) const;

    /// Trapezoid mean of the trailing-period phi nodes of a state vector.
    double window_mean(const Eigen::VectorXd& state) const;

    FloquetResult multipliers() const;
    MeanResponse mean_response() const;

  private:
    Eigen::VectorXd integrate(const Eigen::VectorXd* state, double f_target,
                              double f_p) const;

    PendulumParams par_;
    ControlConfig cfg_;
    MonodromySettings ms_;
    int dim_ = 0;
    int nphi_ = 0;  // phi (and phi_dot) node count, 2*mesh + 1
    int nref_ = 0;  // filter node count under partial relaxation, else 0
    Eigen::VectorXd a_phi_;  // plant coefficients at the stage times
    Eigen::VectorXd a_p_;
    double a_vel_ = 0.0;
    // Four-point interpolation stencils for the delayed reads, one entry per
    // stage time: into the one-delay-back window, the two-delays-back
    // window, and the filter trace.
    struct Stencil {
        int base;
        double w[4];
    };
    std::vector<Stencil> read_T_, read_2T_, read_ref_;
    Eigen::VectorXd simpson_;  // window quadrature weights on the mesh
    Eigen::MatrixXd op_;
};

/// Multipliers of the controlled loop about an orbit given by its phi nodes.
FloquetResult closed_loop_multipliers(const PendulumParams& par,
                                      const ControlConfig& cfg, double p,
                                      const Eigen::VectorXd& phi_nodes,
                                      const MonodromySettings& ms = {});

}  // namespace pendcbc
