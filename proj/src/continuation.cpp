#include "pendcbc/continuation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pendcbc {

SettlePolicy ContinuationSettings::effective_settle() const {
    SettlePolicy eff = settle;
    eff.mean_tol = std::min(settle.mean_tol, newton_tol / polish_divisor);
    return eff;
}

const char* to_string(BranchPoint::Flag flag) {
    switch (flag) {
        case BranchPoint::Flag::stable_guess: return "stable-guess";
        case BranchPoint::Flag::fold: return "fold";
        case BranchPoint::Flag::unstable_guess: return "unstable-guess";
        case BranchPoint::Flag::lost: return "lost";
    }
    return "unknown";
}

SimExperiment::SimExperiment(const PendulumParams& par,
                             const ControlConfig& base)
    : par_(par), base_(base) {}

void SimExperiment::cold_start(double p, double phi0) {
    ControlConfig cfg = base_;
    cfg.set_target_mean(phi0);
    sim_.emplace(par_, cfg, p, PlantState{phi0, 0.0, 0.0});
}

SettleResult SimExperiment::measure(double p, double phi0,
                                    const SettlePolicy& policy) {
    if (!sim_ || sim_->lost()) {
        cold_start(p, phi0);
    } else {
        sim_->set_amplitude(p);
        sim_->set_target_mean(phi0);
    }
    SettleResult res = sim_->settle(policy);
    if (res.lost) {
        cold_start(p, phi0);
        res = sim_->settle(policy);
    }
    return res;
}

ResidualValue residual(MeanPhaseExperiment& exp, double p, double phi0,
                       const BranchPoint& prev, double h,
                       const ContinuationSettings& cfg) {
    ResidualValue out;
    out.diag = exp.measure(p, phi0, cfg.effective_settle());
    if (out.diag.lost) return out;
    const double dzp = (p - prev.p) / cfg.sigma_p;
    const double dzf = (phi0 - prev.phi0) / cfg.sigma_phi;
    out.r1 = prev.tangent[0] * dzp + prev.tangent[1] * dzf - h;
    out.r2 = out.diag.mean_phase - phi0;
    out.valid = true;
    return out;
}

Eigen::Vector2d update_tangent(const Eigen::Vector2d& prev_tangent,
                               double p_new, double phi0_new, double p_old,
                               double phi0_old,
                               const ContinuationSettings& cfg) {
    Eigen::Vector2d t((p_new - p_old) / cfg.sigma_p,
                      (phi0_new - phi0_old) / cfg.sigma_phi);
    const double n = t.norm();
    if (n == 0.0) return prev_tangent;
    t /= n;
    if (t.dot(prev_tangent) < 0.0) t = -t;
    return t;
}

namespace {

// Residuals compared in one space: r1 already lives in scaled units, r2 is
// brought into them, so "smaller" means the same thing for both rows.
double scaled_norm(const ResidualValue& r, const ContinuationSettings& cfg) {
    return std::max(std::abs(r.r1), std::abs(r.r2) / cfg.sigma_phi);
}

}  // namespace

std::optional<BranchPoint> newton_correct(MeanPhaseExperiment& exp,
                                          double p_pred, double phi0_pred,
                                          const BranchPoint& prev, double h,
                                          const ContinuationSettings& cfg,
                                          bool* rotation_lost) {
    if (rotation_lost) *rotation_lost = false;
    const double polish_tol = 5.0 * cfg.effective_settle().mean_tol;

    double p = p_pred;
    double phi0 = phi0_pred;
    ResidualValue cur = residual(exp, p, phi0, prev, h, cfg);
    int periods = cur.diag.periods_used;
    if (!cur.valid) {
        if (rotation_lost) *rotation_lost = true;
        return std::nullopt;
    }

    bool done = false;
    for (int iter = 0; iter < cfg.max_newton_iter && !done; ++iter) {
        if (std::abs(cur.r1) <= cfg.newton_tol &&
            std::abs(cur.r2) <= polish_tol) {
            done = true;
            break;
        }

        ResidualValue rp = residual(exp, p + cfg.fd_dp, phi0, prev, h, cfg);
        periods += rp.diag.periods_used;
        if (!rp.valid) {
            if (rotation_lost) *rotation_lost = true;
            return std::nullopt;
        }
        ResidualValue rf = residual(exp, p, phi0 + cfg.fd_dphi, prev, h, cfg);
        periods += rf.diag.periods_used;
        if (!rf.valid) {
            if (rotation_lost) *rotation_lost = true;
            return std::nullopt;
        }

        Eigen::Matrix2d jac;
        jac.row(0) = prev.tangent.transpose();
        jac(1, 0) = (rp.r2 - cur.r2) / (cfg.fd_dp / cfg.sigma_p);
        jac(1, 1) = (rf.r2 - cur.r2) / (cfg.fd_dphi / cfg.sigma_phi);
        Eigen::Vector2d step =
            jac.fullPivLu().solve(Eigen::Vector2d(-cur.r1, -cur.r2));
        if (!step.allFinite()) return std::nullopt;

        // Full step first; halve while the residual refuses to shrink. Near
        // the measurement floor the comparison is noise against noise, so
        // after four halvings we keep whatever we have.
        bool moved = false;
        for (int halves = 0; halves <= 4; ++halves) {
            const double p_try = p + step[0] * cfg.sigma_p;
            const double f_try = phi0 + step[1] * cfg.sigma_phi;
            ResidualValue nxt = residual(exp, p_try, f_try, prev, h, cfg);
            periods += nxt.diag.periods_used;
            if (!nxt.valid) {
                if (rotation_lost) *rotation_lost = true;
                return std::nullopt;
            }
            if (scaled_norm(nxt, cfg) < scaled_norm(cur, cfg)) {
                p = p_try;
                phi0 = f_try;
                cur = nxt;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }

    if (std::abs(cur.r1) > cfg.newton_tol || std::abs(cur.r2) > polish_tol)
        return std::nullopt;

    BranchPoint pt;
    pt.p = p;
    pt.phi0 = phi0;
    pt.tangent = prev.tangent;  // the driver swaps in the fresh secant
    pt.residual_norm = std::max(std::abs(cur.r1), std::abs(cur.r2));
    pt.mean_mismatch = cur.r2;
    pt.u_sup = cur.diag.u_sup;
    pt.periods_used = periods;
    pt.step_h = h;
    return pt;
}

Branch continue_branch(MeanPhaseExperiment& exp, double p_start,
                       double phi0_guess, const ContinuationSettings& cfg) {
    const SettlePolicy eff = cfg.effective_settle();
    const double polish_tol = 5.0 * eff.mean_tol;

    // The guess only has to land in the basin of the stable rotation; the
    // first settled mean becomes the real starting target.
    SettleResult first = exp.measure(p_start, phi0_guess, eff);
    if (first.lost || !first.converged)
        throw std::runtime_error(
            "continuation start point did not converge at p = " +
            std::to_string(p_start));

    double phi0 = first.mean_phase;
    int periods = first.periods_used;
    SettleResult cur = exp.measure(p_start, phi0, eff);
    periods += cur.periods_used;
    if (cur.lost)
        throw std::runtime_error("continuation start point lost the rotation");

    // Fixed-amplitude polish: one-dimensional Newton on the mean mismatch.
    for (int iter = 0; iter < cfg.max_newton_iter; ++iter) {
        const double r2 = cur.mean_phase - phi0;
        if (std::abs(r2) <= polish_tol) break;
        SettleResult probe =
            exp.measure(p_start, phi0 + cfg.fd_dphi, eff);
        periods += probe.periods_used;
        if (probe.lost)
            throw std::runtime_error(
                "continuation start polish lost the rotation");
        const double r2_probe =
            probe.mean_phase - (phi0 + cfg.fd_dphi);
        const double slope = (r2_probe - r2) / cfg.fd_dphi;
        // A flat mismatch response means the target tracks the mean one to
        // one already; nothing left to polish.
        if (std::abs(slope) < 1e-3) break;
        phi0 -= r2 / slope;
        cur = exp.measure(p_start, phi0, eff);
        periods += cur.periods_used;
        if (cur.lost)
            throw std::runtime_error(
                "continuation start polish lost the rotation");
    }

    Branch br;
    {
        BranchPoint pt;
        pt.p = p_start;
        pt.phi0 = phi0;
        pt.tangent = Eigen::Vector2d(-1.0, 0.0);
        pt.residual_norm = std::abs(cur.mean_phase - phi0);
        pt.mean_mismatch = cur.mean_phase - phi0;
        pt.u_sup = cur.u_sup;
        pt.periods_used = periods;
        pt.step_h = 0.0;
        br.points.push_back(pt);
    }

    double h = cfg.h0;
    int streak = 0;
    int losses = 0;
    bool past_fold = false;

    while (static_cast<int>(br.points.size()) < cfg.max_points) {
        const BranchPoint& prev = br.points.back();
        const double p_pred = prev.p + h * prev.tangent[0] * cfg.sigma_p;
        const double f_pred = prev.phi0 + h * prev.tangent[1] * cfg.sigma_phi;
        if (p_pred < cfg.p_min || p_pred > cfg.p_max) break;
        if (f_pred < cfg.phi_min || f_pred > cfg.phi_max) break;

        bool lost = false;
        auto next = newton_correct(exp, p_pred, f_pred, prev, h, cfg, &lost);
        if (!next) {
            streak = 0;
            if (lost && ++losses >= cfg.max_consecutive_losses) {
                BranchPoint dead;
                dead.p = p_pred;
                dead.phi0 = f_pred;
                dead.tangent = prev.tangent;
                dead.step_h = h;
                dead.flag = BranchPoint::Flag::lost;
                br.points.push_back(dead);
                break;
            }
            if (h <= cfg.h_min) break;
            h = std::max(cfg.h_min, 0.5 * h);
            continue;
        }

        losses = 0;
        BranchPoint pt = *next;
        pt.tangent = update_tangent(prev.tangent, pt.p, pt.phi0, prev.p,
                                    prev.phi0, cfg);
        if (!past_fold && prev.tangent[0] < 0.0 && pt.tangent[0] > 0.0) {
            // The direction of travel in amplitude flipped from falling to
            // rising: this point sits just past the nose.
            past_fold = true;
            pt.flag = BranchPoint::Flag::fold;
            br.fold_index = static_cast<int>(br.points.size());
        } else {
            pt.flag = past_fold ? BranchPoint::Flag::unstable_guess
                                : BranchPoint::Flag::stable_guess;
        }
        br.points.push_back(pt);
        if (++streak >= 2) h = std::min(h * 1.3, cfg.h_max);
    }
    return br;
}

}  // namespace pendcbc
