#pragma once

#include <Eigen/Core>
#include <complex>
#include <optional>
#include <vector>

#include "pendcbc/params.hpp"

namespace pendcbc {

/// One period of the free (uncontrolled) flow in the rotating frame,
/// integrated together with its first variation, the sensitivity to the
/// excitation amplitude, and the running period-average of phi with its own
/// sensitivities. Everything a Newton step on periodicity plus a phase
/// condition needs, from a single pass.
struct FlowOut {
    Eigen::Vector2d y;            // state after one period
    Eigen::Matrix2d monodromy;    // d y(T) / d y(0)
    Eigen::Vector2d param_sens;   // d y(T) / d p
    double mean_phase = 0.0;      // (1/T) integral of phi
    Eigen::RowVector2d mean_sens; // d mean / d y(0)
    double mean_param_sens = 0.0; // d mean / d p
    Eigen::VectorXd phi_nodes, phi_dot_nodes;  // steps+1 each when requested
};

FlowOut flow_period(const PendulumParams& par, double p,
                    const Eigen::Vector2d& y0, int steps,
                    bool want_nodes = false);

/// A rotating T-periodic solution of the free plant.
struct PeriodicOrbit {
    double p = 0.0;
    Eigen::Vector2d y0;
    double mean_phase = 0.0;
    Eigen::Matrix2d monodromy;
    std::complex<double> mult_dom, mult_sub;  // |mult_dom| >= |mult_sub|
    Eigen::VectorXd phi_nodes, phi_dot_nodes; // steps+1 nodes over one period
    double residual = 0.0;
    int iterations = 0;

    bool stable() const { return std::abs(mult_dom) < 1.0; }
};

/// Node samples of the orbit on a coarser grid of n cells (n+1 values); the
/// stored resolution must be a multiple of n.
Eigen::VectorXd subsample_nodes(const Eigen::VectorXd& nodes, int n);

/// Newton shooting at fixed amplitude. Converges quadratically from a guess
/// within the orbit's basin; returns nothing if the iteration strays.
std::optional<PeriodicOrbit> solve_rotating_orbit(const PendulumParams& par,
                                                  double p,
                                                  const Eigen::Vector2d& y0_guess,
                                                  int steps = 1024);

/// Newton on periodicity plus a prescribed period-average of phi, with the
/// amplitude as the third unknown. Well conditioned through the fold, where
/// fixed-amplitude shooting degenerates.
std::optional<PeriodicOrbit> solve_orbit_at_phase(const PendulumParams& par,
                                                  double mean_phase,
                                                  double p_guess,
                                                  const Eigen::Vector2d& y0_guess,
                                                  int steps = 1024);

/// Branch of rotating orbits under pseudo-arclength continuation in the
/// amplitude. Secant tangents and step lengths live in a functional metric:
/// state differences are measured through the whole orbit by trapezoid over
/// its nodes, not just at the shooting point.
struct BranchTrace {
    std::vector<PeriodicOrbit> points;
    int fold_between = -1;  // tangent reversed between this point and the next
};

BranchTrace trace_rotating_branch(const PendulumParams& par, double p_start,
                                  const Eigen::Vector2d& y0_guess,
                                  double mean_phase_stop, int max_points = 200,
                                  int steps = 1024);

/// Fold of the rotating branch: the amplitude below which free rotation is
/// gone. Traces toward the nose, seeds a corrector by quadratic fit through
/// the bracketing points, then solves periodicity plus det(M - I) = 0.
std::optional<PeriodicOrbit> locate_fold(const PendulumParams& par,
                                         double p_start,
                                         const Eigen::Vector2d& y0_guess,
                                         int steps = 1024);

/// Fold location for a row of candidate pendulum lengths at fixed damping.
/// Rows whose fold search fails carry found = false.
struct CalibrationRow {
    double length = 0.0;
    double fold_p = 0.0;
    double fold_mean = 0.0;
    double averaged_p = 0.0;
    bool found = false;
};

std::vector<CalibrationRow> calibration_sweep(const PendulumParams& base,
                                              const std::vector<double>& lengths,
                                              int steps = 1024);

/// First-guess state for the stable rotating orbit at amplitude p, from the
/// first-order averaged balance  cos(mean) = -2 b / (m l omega p)  on the
/// lift where the fold sits near -pi.
Eigen::Vector2d averaged_orbit_guess(const PendulumParams& par, double p);

/// Averaged-balance fold amplitude 2 b / (m l omega); the true fold sits
/// within a few percent for the calibrated setup.
double averaged_fold_amplitude(const PendulumParams& par);

}  // namespace pendcbc
