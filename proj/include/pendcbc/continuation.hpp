#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "pendcbc/closed_loop.hpp"
#include "pendcbc/params.hpp"

namespace pendcbc {

/// Anything that can run the controlled experiment at a given amplitude and
/// mean-phase target and report where the output settles. The driver only
/// ever talks to this interface, so tests can swap in synthetic response maps
/// with known geometry.
class MeanPhaseExperiment {
  public:
    virtual ~MeanPhaseExperiment() = default;
    virtual SettleResult measure(double p, double phi0,
                                 const SettlePolicy& policy) = 0;
};

/// The real thing: owns one closed-loop simulation that keeps running across
/// measurements, with the amplitude and target turned like knobs between
/// settles. A lost rotation triggers one cold restart from (phi0, 0) before
/// the failure is reported.
class SimExperiment final : public MeanPhaseExperiment {
  public:
    SimExperiment(const PendulumParams& par, const ControlConfig& base);

    SettleResult measure(double p, double phi0,
                         const SettlePolicy& policy) override;

    /// The live rig, for trajectory export after a run. Null before the
    /// first measurement.
    const ClosedLoopSim* sim() const { return sim_ ? &*sim_ : nullptr; }

  private:
    void cold_start(double p, double phi0);

    PendulumParams par_;
    ControlConfig base_;
    std::optional<ClosedLoopSim> sim_;
};

struct ContinuationSettings {
    // One scaled unit of amplitude and of phase. Tangents, steps and the
    // arclength residual live in these units, and they set the yardstick for
    // comparing a traced branch against a reference one.
    double sigma_p = 2e-4;    // m
    double sigma_phi = 1e-4;  // rad

    double newton_tol = 5e-3;  // acceptance threshold on |r1| and |r2|
    // The corrector does not stop at acceptance: it keeps polishing until
    // |r2| reaches 5x the effective settle tolerance, so accepted points
    // carry a control input as quiet as the measurement allows. Tightening
    // newton_tol therefore tightens the settle detector with it.
    double polish_divisor = 5000.0;  // effective mean_tol = newton_tol / this
    int max_newton_iter = 10;

    double fd_dp = 2e-4;    // amplitude probe step (m)
    double fd_dphi = 1e-3;  // phase probe step (rad)

    double h0 = 5.0, h_min = 0.5, h_max = 250.0;
    int max_points = 400;
    double p_min = 0.0, p_max = 0.03;      // amplitude window (m)
    double phi_min = -3.7, phi_max = 0.0;  // mean-phase window (rad)
    int max_consecutive_losses = 3;

    SettlePolicy settle;  // mean_tol is tightened by the polish coupling

    /// Settle policy actually used: mean_tol = min(cfg, newton_tol/divisor).
    SettlePolicy effective_settle() const;
};

struct BranchPoint {
    double p = 0.0;
    double phi0 = 0.0;  // rad
    // Unit vector in scaled coordinates, pointing where the next point goes.
    Eigen::Vector2d tangent = Eigen::Vector2d::Zero();
    double residual_norm = 0.0;  // max(|r1|, |r2|) at acceptance
    double mean_mismatch = 0.0;  // r2 in rad after polish
    double u_sup = 0.0;          // control sup over the last settled period
    int periods_used = 0;        // total experiment periods spent on the point
    double step_h = 0.0;         // arclength step that produced the point

    enum class Flag { stable_guess, fold, unstable_guess, lost } flag =
        Flag::stable_guess;
};

const char* to_string(BranchPoint::Flag flag);

struct Branch {
    std::vector<BranchPoint> points;
    int fold_index = -1;  // first point past the nose, -1 if never reached
};

/// r1: signed distance (in step units) from the arclength plane through
/// `prev` offset by h along its tangent. r2: settled mean minus the target,
/// in rad. `valid` is false when the rotation was lost.
struct ResidualValue {
    double r1 = 0.0, r2 = 0.0;
    bool valid = false;
    SettleResult diag;
};

ResidualValue residual(MeanPhaseExperiment& exp, double p, double phi0,
                       const BranchPoint& prev, double h,
                       const ContinuationSettings& cfg);

/// Secant tangent through two points, unit length in scaled coordinates,
/// sign-aligned with the previous tangent.
Eigen::Vector2d update_tangent(const Eigen::Vector2d& prev_tangent,
                               double p_new, double phi0_new, double p_old,
                               double phi0_old,
                               const ContinuationSettings& cfg);

/// Corrector solve from the predictor. The Jacobian's first row is the
/// tangent itself (r1 is affine in the scaled coordinates); the second row
/// is forward-differenced with the fd_* probe steps. Full Newton steps,
/// halved up to four times when the residual fails to shrink. Returns
/// nothing when the iteration diverges; `rotation_lost` reports whether a
/// lost rotation was the reason.
std::optional<BranchPoint> newton_correct(MeanPhaseExperiment& exp,
                                          double p_pred, double phi0_pred,
                                          const BranchPoint& prev, double h,
                                          const ContinuationSettings& cfg,
                                          bool* rotation_lost = nullptr);

/// Predictor-corrector march from a stable rotation through the nose of the
/// branch and onto the unstable segment. The start target is replaced by one
/// settled measurement and polished at fixed amplitude; the first tangent is
/// (-1, 0), straight toward smaller amplitudes, and reorients itself from
/// the first secant. Stops at the window edges, after max_points, or with a
/// terminal `lost` row after too many consecutive lost rotations.
Branch continue_branch(MeanPhaseExperiment& exp, double p_start,
                       double phi0_guess, const ContinuationSettings& cfg);

}  // namespace pendcbc
