#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "pendcbc/history.hpp"
#include "pendcbc/params.hpp"
#include "pendcbc/pendulum.hpp"

namespace pendcbc {

/// Settings of the feedback path. The filtered reference is built from the
/// plant's own delayed output,
///   ref(t) = (1-R) ref(t-T) + R (phi(t-T) - proj(t)),
/// where proj(t) is the projection of the window phi(t-T-s), s in [0,T],
/// onto the first `projection_order` Fourier modes, evaluated at the young
/// end of the window. For order 0 that is literally the running average of
/// phi over lags [T, 2T]. The actuation is u(t) = phi(t) - ref(t) - target(t)
/// fed through the PD law.
struct ControlConfig {
    double gain = 0.0;           // PD gain G
    double deriv_ratio = 0.5;    // weight of u_dot inside the PD law
    double relaxation = 1.0;     // R in (0, 1]
    int projection_order = 0;    // N
    /// Target coefficients, size 2N+1, slot k+N. The k=0 slot is the plain
    /// mean target in radians; other slots use the spectral normalization.
    Eigen::VectorXd target = Eigen::VectorXd::Zero(1);
    int steps_per_period = 512;
    int warmup_periods = 3;
    double velocity_limit = 400.0;  // rad/s, |phi_dot| beyond this is a blowup
    /// Diagnostic: run the multi-mode projection loop even at order 0. Must
    /// not change a single bit of the trajectory.
    bool force_general_projection = false;

    double target_mean() const { return target[projection_order]; }
    /// Keeps the coefficient vector consistent with the current order, so
    /// setting the order first and the mean second is safe.
    void set_target_mean(double v) {
        if (target.size() != 2 * projection_order + 1)
            target = Eigen::VectorXd::Zero(2 * projection_order + 1);
        target[projection_order] = v;
    }
    void validate(void) const;
};

/// Convergence policy for settling onto an attractor: the per-period mean of
/// phi must move less than mean_tol for `consecutive` periods in a row.
struct SettlePolicy {
    double mean_tol = 1e-6;  // rad
    int consecutive = 3;
    int max_periods = 500;
};

/// Outcome of running the closed loop until the rotation settles.
struct SettleResult {
    double mean_phase = 0.0;  // asymptotic per-period average of phi
    bool converged = false;
    bool lost = false;        // rotation dropped or the state blew up
    int periods_used = 0;
    double u_sup = 0.0;       // max |u| over the final period
    Eigen::VectorXd final_phi;      // nodes of the last period, both endpoints
    Eigen::VectorXd final_phi_dot;
};

struct TrajectoryRow {
    double t, phi, phi_dot, phi_ref, u, torque;
};
using Trajectory = std::vector<TrajectoryRow>;

/// The running experiment: plant, delay filter and PD actuation integrated
/// together with classical RK4 at dt = T / steps_per_period. Delayed values
/// come from the history ring through cubic Hermite interpolation; the
/// projection integrals ride along as extra states driven by the window
/// boundary values, so the right hand side stays smooth inside every step.
class ClosedLoopSim {
  public:
    /// Cold start: integrate the uncontrolled plant for warmup_periods from
    /// `start`, bootstrap the filter over the trailing period, switch the
    /// control on. Control engages warmup_periods later than `start.t`.
    ClosedLoopSim(const PendulumParams& par, const ControlConfig& cfg, double p,
                  const PlantState& start);

    /// Start exactly on a T-periodic motion given by its node samples over
    /// one period (steps_per_period+1 values, both endpoints). History is the
    /// periodic extension; the filter state is consistent with it.
    static ClosedLoopSim from_periodic(const PendulumParams& par,
                                       const ControlConfig& cfg, double p,
                                       const Eigen::VectorXd& phi_nodes,
                                       const Eigen::VectorXd& phi_dot_nodes,
                                       double t0 = 0.0);

    /// Input switches take effect at the current node; the node's departure
    /// acceleration and diagnostics are refreshed so interpolation across it
    /// keeps both one-sided limits.
    void set_amplitude(double p);
    double amplitude() const { return p_; }
    void set_target_mean(double v);
    void set_target(const Eigen::VectorXd& coeffs);

    /// Integrate n full periods (unless the rotation is lost first),
    /// optionally appending every node to `capture`.
    void run_periods(int n, Trajectory* capture = nullptr);

    /// Integrate until the per-period mean settles, the rotation is lost, or
    /// the period budget runs out.
    SettleResult settle(const SettlePolicy& policy);

    const HistorySegment& history() const { return hist_; }
    const PendulumParams& params() const { return par_; }
    const ControlConfig& config() const { return cfg_; }
    double time() const { return t_; }
    PlantState state() const { return {y_.phi, y_.phi_dot, t_}; }
    bool lost() const { return lost_; }
    double last_period_mean() const { return last_mean_; }
    double last_period_u_sup() const { return last_u_sup_; }

  private:
    struct LoopState {
        double phi = 0.0, phi_dot = 0.0, avg = 0.0;
        Eigen::VectorXd cs;  // cos/sin window coefficients, 2 per mode
    };
    struct FilterOut {
        double ref, ref_dot;
    };

    ClosedLoopSim(const PendulumParams& par, const ControlConfig& cfg, double p);
    void seed_from_samples(const std::vector<double>& phi,
                           const std::vector<double>& phi_dot, double t0);
    FilterOut filter_eval(double t, const LoopState& y,
                          Side side = Side::right) const;
    double projection_term(const LoopState& y) const;
    double projection_term_dot(double t, const LoopState& y, double phi_T,
                               double phi_2T) const;
    void derivative(double t, const LoopState& y, LoopState& dy,
                    Side side) const;
    void step();
    void finish_period();
    void refresh_departure();
    double target_signal(double t) const;
    double target_signal_dot(double t) const;

    PendulumParams par_;
    ControlConfig cfg_;
    double p_;
    double dt_;
    HistorySegment hist_;
    LoopState y_;
    double t_ = 0.0;
    double t0_ = 0.0;  // control-on time
    bool lost_ = false;
    double last_mean_ = 0.0;
    double last_u_sup_ = 0.0;
    LoopState scratch_[5];  // RK4 stage storage, avoids reallocation
};

/// Filter output recomputed from stored history alone by direct quadrature
/// (trapezoid over the lag window, spectral projection for higher modes).
/// `t` must sit on the history grid. This is the reference implementation the
/// integrator's running states are checked against.
double delay_filter_update(const HistorySegment& hist, const ControlConfig& cfg,
                           const PendulumParams& par, double t);

/// (u, u_dot) at a grid time, from stored history plus the target synthesis.
Eigen::Vector2d control_input(const HistorySegment& hist,
                              const ControlConfig& cfg,
                              const PendulumParams& par, double t);

/// Convenience wrapper: cold-start a sim and integrate `periods` full periods
/// capturing the trajectory.
ClosedLoopSim integrate_controlled(const PendulumParams& par,
                                   const ControlConfig& cfg, double p,
                                   const PlantState& start, int periods,
                                   Trajectory* capture);

}  // namespace pendcbc
