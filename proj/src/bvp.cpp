#include "pendcbc/bvp.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pendcbc/pendulum.hpp"

namespace pendcbc {
namespace {

// Augmented flow state, all advanced by one RK4 tableau:
//   [0..1]  phi, phi_dot
//   [2..5]  variation, column major
//   [6..7]  amplitude sensitivity
//   [8]     running mean of phi
//   [9..10] running mean of the variation's phi row
//   [11]    running mean of the sensitivity's phi entry
using AugState = Eigen::Matrix<double, 12, 1>;

AugState aug_rhs(const AugState& v, double t, const PendulumParams& par,
                 double p) {
    const double accel = rhs_rotating({v[0], v[1], t}, par, p)[1];
    const double aj = rotating_accel_dphi(v[0], t, par, p);
    const double av = rotating_accel_dphi_dot(par);
    const double ap = rotating_accel_dp(v[0], t, par);
    const double inv_T = 1.0 / par.period;

    AugState d;
    d[0] = v[1];
    d[1] = accel;
    d[2] = v[3];
    d[3] = aj * v[2] + av * v[3];
    d[4] = v[5];
    d[5] = aj * v[4] + av * v[5];
    d[6] = v[7];
    d[7] = aj * v[6] + av * v[7] + ap;
    d[8] = v[0] * inv_T;
    d[9] = v[2] * inv_T;
    d[10] = v[4] * inv_T;
    d[11] = v[6] * inv_T;
    return d;
}

// sigma_p weights the amplitude against whole-orbit state differences in the
// branch metric; 1 mm of amplitude counts like one radian through the orbit.
constexpr double kAmplitudeScale = 1e-3;

double orbit_distance(const PeriodicOrbit& a, const PeriodicOrbit& b,
                      const PendulumParams& par) {
    const Eigen::Index n = a.phi_nodes.size() - 1;
    double acc = 0.0;
    for (Eigen::Index i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        const double dphi = a.phi_nodes[i] - b.phi_nodes[i];
        const double dvel = (a.phi_dot_nodes[i] - b.phi_dot_nodes[i]) / par.omega;
        acc += w * (dphi * dphi + dvel * dvel);
    }
    acc /= static_cast<double>(n);
    const double dp = (a.p - b.p) / kAmplitudeScale;
    return std::sqrt(acc + dp * dp);
}

void attach_multipliers(PeriodicOrbit& orbit) {
    const double tr = orbit.monodromy.trace();
    const double det = orbit.monodromy.determinant();
    const std::complex<double> disc =
        std::sqrt(std::complex<double>(0.25 * tr * tr - det, 0.0));
    std::complex<double> a = 0.5 * tr + disc;
    std::complex<double> b = 0.5 * tr - disc;
    if (std::abs(a) < std::abs(b)) std::swap(a, b);
    orbit.mult_dom = a;
    orbit.mult_sub = b;
}

PeriodicOrbit make_orbit(const FlowOut& flow, const Eigen::Vector2d& y0,
                         double p, double residual, int iterations) {
    PeriodicOrbit orbit;
    orbit.p = p;
    orbit.y0 = y0;
    orbit.mean_phase = flow.mean_phase;
    orbit.monodromy = flow.monodromy;
    orbit.phi_nodes = flow.phi_nodes;
    orbit.phi_dot_nodes = flow.phi_dot_nodes;
    orbit.residual = residual;
    orbit.iterations = iterations;
    attach_multipliers(orbit);
    return orbit;
}

constexpr double kShootTol = 1e-12;

}  // namespace

FlowOut flow_period(const PendulumParams& par, double p,
                    const Eigen::Vector2d& y0, int steps, bool want_nodes) {
    if (steps < 2) throw std::invalid_argument("flow_period: steps < 2");
    const double dt = par.period / steps;

    AugState v = AugState::Zero();
    v[0] = y0[0];
    v[1] = y0[1];
    v[2] = 1.0;  // variation starts at identity
    v[5] = 1.0;

    FlowOut out;
    if (want_nodes) {
        out.phi_nodes.resize(steps + 1);
        out.phi_dot_nodes.resize(steps + 1);
        out.phi_nodes[0] = v[0];
        out.phi_dot_nodes[0] = v[1];
    }

    for (int i = 0; i < steps; ++i) {
        const double t = dt * i;  // node times from the index, never accumulated
        const AugState k1 = aug_rhs(v, t, par, p);
        const AugState k2 = aug_rhs(v + 0.5 * dt * k1, t + 0.5 * dt, par, p);
        const AugState k3 = aug_rhs(v + 0.5 * dt * k2, t + 0.5 * dt, par, p);
        const AugState k4 = aug_rhs(v + dt * k3, t + dt, par, p);
        v += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (want_nodes) {
            out.phi_nodes[i + 1] = v[0];
            out.phi_dot_nodes[i + 1] = v[1];
        }
    }

    out.y = v.head<2>();
    out.monodromy << v[2], v[4], v[3], v[5];
    out.param_sens = v.segment<2>(6);
    out.mean_phase = v[8];
    out.mean_sens << v[9], v[10];
    out.mean_param_sens = v[11];
    return out;
}

Eigen::VectorXd subsample_nodes(const Eigen::VectorXd& nodes, int n) {
    const Eigen::Index fine = nodes.size() - 1;
    if (n < 1 || fine % n != 0)
        throw std::invalid_argument("subsample_nodes: grid does not divide");
    const Eigen::Index stride = fine / n;
    Eigen::VectorXd out(n + 1);
    for (int i = 0; i <= n; ++i) out[i] = nodes[i * stride];
    return out;
}

std::optional<PeriodicOrbit> solve_rotating_orbit(const PendulumParams& par,
                                                  double p,
                                                  const Eigen::Vector2d& y0_guess,
                                                  int steps) {
    Eigen::Vector2d x = y0_guess;
    for (int iter = 0; iter < 25; ++iter) {
        const FlowOut flow = flow_period(par, p, x, steps, true);
        const Eigen::Vector2d r = flow.y - x;
        if (!r.allFinite()) return std::nullopt;
        if (r.lpNorm<Eigen::Infinity>() < kShootTol)
            return make_orbit(flow, x, p, r.lpNorm<Eigen::Infinity>(), iter);
        const Eigen::Matrix2d jac = flow.monodromy - Eigen::Matrix2d::Identity();
        const Eigen::Vector2d dx = jac.partialPivLu().solve(-r);
        if (!dx.allFinite() || dx.norm() > 10.0) return std::nullopt;
        x += dx;
    }
    return std::nullopt;
}

std::optional<PeriodicOrbit> solve_orbit_at_phase(const PendulumParams& par,
                                                  double mean_phase,
                                                  double p_guess,
                                                  const Eigen::Vector2d& y0_guess,
                                                  int steps) {
    Eigen::Vector3d x;
    x << y0_guess[0], y0_guess[1], p_guess;
    for (int iter = 0; iter < 30; ++iter) {
        if (x[2] <= 0.0) return std::nullopt;
        const FlowOut flow = flow_period(par, x[2], x.head<2>(), steps, true);
        Eigen::Vector3d r;
        r.head<2>() = flow.y - x.head<2>();
        r[2] = flow.mean_phase - mean_phase;
        if (!r.allFinite()) return std::nullopt;
        if (r.lpNorm<Eigen::Infinity>() < kShootTol) {
            PeriodicOrbit orbit = make_orbit(flow, x.head<2>(), x[2],
                                             r.lpNorm<Eigen::Infinity>(), iter);
            return orbit;
        }
        Eigen::Matrix3d jac;
        jac.topLeftCorner<2, 2>() =
            flow.monodromy - Eigen::Matrix2d::Identity();
        jac.topRightCorner<2, 1>() = flow.param_sens;
        jac.bottomLeftCorner<1, 2>() = flow.mean_sens;
        jac(2, 2) = flow.mean_param_sens;
        const Eigen::Vector3d dx = jac.partialPivLu().solve(-r);
        if (!dx.allFinite() || dx.norm() > 10.0) return std::nullopt;
        x += dx;
    }
    return std::nullopt;
}

namespace {

// Corrector for one pseudo-arclength step: periodicity plus the linearized
// plane through the predictor, normal to the secant tangent. Scaled
// coordinates (phi, phi_dot / omega, p / sigma_p) keep the row balanced.
std::optional<PeriodicOrbit> arc_correct(const PendulumParams& par,
                                         const Eigen::Vector3d& pred,
                                         const Eigen::Vector3d& tangent_scaled,
                                         int steps) {
    const Eigen::Vector3d row(tangent_scaled[0], tangent_scaled[1] / par.omega,
                              tangent_scaled[2] / kAmplitudeScale);
    Eigen::Vector3d x = pred;
    for (int iter = 0; iter < 12; ++iter) {
        if (x[2] <= 0.0) return std::nullopt;
        const FlowOut flow = flow_period(par, x[2], x.head<2>(), steps, true);
        Eigen::Vector3d r;
        r.head<2>() = flow.y - x.head<2>();
        r[2] = row.dot(x - pred);
        if (!r.allFinite()) return std::nullopt;
        if (r.lpNorm<Eigen::Infinity>() < kShootTol)
            return make_orbit(flow, x.head<2>(), x[2],
                              r.lpNorm<Eigen::Infinity>(), iter);
        Eigen::Matrix3d jac;
        jac.topLeftCorner<2, 2>() =
            flow.monodromy - Eigen::Matrix2d::Identity();
        jac.topRightCorner<2, 1>() = flow.param_sens;
        jac.bottomLeftCorner<1, 3>() = row.transpose();
        const Eigen::Vector3d dx = jac.partialPivLu().solve(-r);
        if (!dx.allFinite() || dx.norm() > 10.0) return std::nullopt;
        x += dx;
    }
    return std::nullopt;
}

Eigen::Vector3d pack(const PeriodicOrbit& o) {
    return Eigen::Vector3d(o.y0[0], o.y0[1], o.p);
}

}  // namespace

BranchTrace trace_rotating_branch(const PendulumParams& par, double p_start,
                                  const Eigen::Vector2d& y0_guess,
                                  double mean_phase_stop, int max_points,
                                  int steps) {
    BranchTrace trace;
    auto first = solve_rotating_orbit(par, p_start, y0_guess, steps);
    if (!first) return trace;
    trace.points.push_back(*first);

    // Second point at fixed, slightly smaller amplitude sets the secant
    // direction toward the nose.
    auto second = solve_rotating_orbit(par, p_start * (1.0 - 1.0 / 256.0),
                                       first->y0, steps);
    if (!second) return trace;
    trace.points.push_back(*second);

    double h = 4.0 * orbit_distance(*first, *second, par);
    const double h_max = 16.0 * h;
    const double h_min = h / 4096.0;
    int streak = 0;

    while (static_cast<int>(trace.points.size()) < max_points) {
        const PeriodicOrbit& a = trace.points[trace.points.size() - 2];
        const PeriodicOrbit& b = trace.points.back();
        if (b.mean_phase <= mean_phase_stop) break;

        const double ds = orbit_distance(a, b, par);
        if (ds == 0.0) break;
        const Eigen::Vector3d secant = (pack(b) - pack(a)) / ds;
        const Eigen::Vector3d pred = pack(b) + h * secant;

        auto next = arc_correct(par, pred, secant, steps);
        if (!next) {
            h *= 0.5;
            streak = 0;
            if (h < h_min) break;
            continue;
        }
        if (trace.fold_between < 0 && trace.points.size() >= 2) {
            const double before = b.p - a.p;
            const double after = next->p - b.p;
            if (before != 0.0 && after != 0.0 &&
                std::signbit(before) != std::signbit(after))
                trace.fold_between = static_cast<int>(trace.points.size()) - 1;
        }
        trace.points.push_back(*next);
        if (++streak >= 2) {
            h = std::min(h * 1.3, h_max);
            streak = 0;
        }
    }
    return trace;
}

std::optional<PeriodicOrbit> locate_fold(const PendulumParams& par,
                                         double p_start,
                                         const Eigen::Vector2d& y0_guess,
                                         int steps) {
    // Walk the branch through the nose; mean phase keeps falling there, so a
    // stop a little past the fold's averaged-balance location is safe.
    const double stop = -std::numbers::pi - 0.45;
    BranchTrace trace =
        trace_rotating_branch(par, p_start, y0_guess, stop, 400, steps);
    if (trace.fold_between < 1 ||
        trace.fold_between + 1 >= static_cast<int>(trace.points.size()))
        return std::nullopt;

    const PeriodicOrbit& a = trace.points[trace.fold_between - 1];
    const PeriodicOrbit& b = trace.points[trace.fold_between];
    const PeriodicOrbit& c = trace.points[trace.fold_between + 1];

    // Quadratic fit of the three bracketing points against arclength puts the
    // seed at the fitted extremum of the amplitude.
    const double s1 = orbit_distance(a, b, par);
    const double s2 = s1 + orbit_distance(b, c, par);
    Eigen::Matrix3d vand;
    vand << 0.0, 0.0, 1.0, s1 * s1, s1, 1.0, s2 * s2, s2, 1.0;
    const Eigen::PartialPivLU<Eigen::Matrix3d> lu(vand);
    const Eigen::Vector3d coeff_p =
        lu.solve(Eigen::Vector3d(a.p, b.p, c.p));
    if (coeff_p[0] == 0.0) return std::nullopt;
    const double s_star = -0.5 * coeff_p[1] / coeff_p[0];

    Eigen::Vector3d x;
    {
        const Eigen::Vector3d xa = pack(a), xb = pack(b), xc = pack(c);
        for (int k = 0; k < 3; ++k) {
            const Eigen::Vector3d coeff =
                lu.solve(Eigen::Vector3d(xa[k], xb[k], xc[k]));
            x[k] = (coeff[0] * s_star + coeff[1]) * s_star + coeff[2];
        }
    }

    // Corrector: periodicity and det(M - I) = 0. The determinant row comes
    // from forward differences, one extra period per unknown.
    const auto fold_gap = [&](const Eigen::Vector3d& z) {
        const FlowOut f = flow_period(par, z[2], z.head<2>(), steps, false);
        return (f.monodromy - Eigen::Matrix2d::Identity()).determinant();
    };
    for (int iter = 0; iter < 20; ++iter) {
        if (x[2] <= 0.0) return std::nullopt;
        const FlowOut flow = flow_period(par, x[2], x.head<2>(), steps, true);
        const double gap =
            (flow.monodromy - Eigen::Matrix2d::Identity()).determinant();
        Eigen::Vector3d r;
        r.head<2>() = flow.y - x.head<2>();
        r[2] = gap;
        if (!r.allFinite()) return std::nullopt;
        if (r.head<2>().lpNorm<Eigen::Infinity>() < kShootTol &&
            std::abs(gap) < 1e-10)
            return make_orbit(flow, x.head<2>(), x[2],
                              r.head<2>().lpNorm<Eigen::Infinity>(), iter);
        Eigen::Matrix3d jac;
        jac.topLeftCorner<2, 2>() =
            flow.monodromy - Eigen::Matrix2d::Identity();
        jac.topRightCorner<2, 1>() = flow.param_sens;
        const Eigen::Vector3d delta(1e-7, 1e-7, 1e-8);
        for (int k = 0; k < 3; ++k) {
            Eigen::Vector3d z = x;
            z[k] += delta[k];
            jac(2, k) = (fold_gap(z) - gap) / delta[k];
        }
        const Eigen::Vector3d dx = jac.partialPivLu().solve(-r);
        if (!dx.allFinite() || dx.norm() > 10.0) return std::nullopt;
        x += dx;
    }
    return std::nullopt;
}

std::vector<CalibrationRow> calibration_sweep(const PendulumParams& base,
                                              const std::vector<double>& lengths,
                                              int steps) {
    std::vector<CalibrationRow> rows;
    rows.reserve(lengths.size());
    for (double l : lengths) {
        PendulumParams par = base;
        par.length = l;
        par.validate();
        CalibrationRow row;
        row.length = l;
        row.averaged_p = averaged_fold_amplitude(par);
        // Start a comfortable margin above the averaged estimate, on the
        // stable side of the nose.
        const double p_start = 1.13 * row.averaged_p;
        if (auto fold = locate_fold(par, p_start,
                                    averaged_orbit_guess(par, p_start), steps)) {
            row.fold_p = fold->p;
            row.fold_mean = fold->mean_phase;
            row.found = true;
        }
        rows.push_back(row);
    }
    return rows;
}

Eigen::Vector2d averaged_orbit_guess(const PendulumParams& par, double p) {
    const double ratio =
        std::min(1.0, averaged_fold_amplitude(par) / std::max(p, 1e-12));
    return Eigen::Vector2d(-std::numbers::pi + std::acos(ratio), 0.0);
}

double averaged_fold_amplitude(const PendulumParams& par) {
    return 2.0 * par.damping / (par.mass * par.length * par.omega);
}

}  // namespace pendcbc
