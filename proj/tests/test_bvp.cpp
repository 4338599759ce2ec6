#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>

#include "pendcbc/bvp.hpp"
#include "pendcbc/closed_loop.hpp"
#include "pendcbc/params.hpp"
#include "pendcbc/spectral.hpp"

using namespace pendcbc;

namespace {

double abel_determinant(const PendulumParams& par) {
    return std::exp(-par.damping * par.period /
                    (par.mass * par.length * par.length));
}

}  // namespace

TEST_CASE("one-period flow reproduces finite differences of itself") {
    PendulumParams par;
    const double p = 0.012;
    const Eigen::Vector2d y0(-2.7, -2.4);
    const FlowOut base = flow_period(par, p, y0, 1024);

    const double d = 1e-7;
    for (int k = 0; k < 2; ++k) {
        Eigen::Vector2d y = y0;
        y[k] += d;
        const FlowOut bumped = flow_period(par, p, y, 1024);
        const Eigen::Vector2d fd = (bumped.y - base.y) / d;
        CHECK(std::abs(base.monodromy(0, k) - fd[0]) < 2e-6);
        CHECK(std::abs(base.monodromy(1, k) - fd[1]) < 2e-6);
        CHECK(std::abs(base.mean_sens[k] -
                       (bumped.mean_phase - base.mean_phase) / d) < 2e-6);
    }
    const double dp = 1e-8;
    const FlowOut bp = flow_period(par, p + dp, y0, 1024);
    CHECK(std::abs(base.param_sens[0] - (bp.y[0] - base.y[0]) / dp) < 2e-4);
    CHECK(std::abs(base.param_sens[1] - (bp.y[1] - base.y[1]) / dp) < 2e-3);
    CHECK(std::abs(base.mean_param_sens -
                   (bp.mean_phase - base.mean_phase) / dp) < 1e-4);
}

TEST_CASE("monodromy determinant carries the damping exactly") {
    // Viscous damping with a state-free velocity coefficient fixes the
    // determinant of the one-period variation regardless of the orbit.
    PendulumParams par;
    for (double p : {0.0115, 0.013}) {
        const FlowOut f = flow_period(par, p, Eigen::Vector2d(-2.8, -2.0), 1024);
        CHECK(std::abs(f.monodromy.determinant() - abel_determinant(par)) <
              1e-11);
    }
    PendulumParams heavy;
    heavy.length = 0.25;
    heavy.damping = 0.05;
    const FlowOut f = flow_period(heavy, 0.02, Eigen::Vector2d(-2.9, 0.0), 1024);
    CHECK(std::abs(f.monodromy.determinant() - abel_determinant(heavy)) <
          1e-11);
}

TEST_CASE("shooting lands on the rotating orbit and stays there") {
    PendulumParams par;
    const double p = 0.012;
    const auto orbit = solve_rotating_orbit(par, p, averaged_orbit_guess(par, p));
    REQUIRE(orbit.has_value());
    CHECK(orbit->residual < 1e-12);

    // Frozen by the reference run of this solver; the orbit is unique on the
    // stable lift, so any correct shooting lands here.
    CHECK(orbit->y0[0] == doctest::Approx(-2.736580795549).epsilon(1e-9));
    CHECK(orbit->y0[1] == doctest::Approx(-2.379116560617).epsilon(1e-9));
    CHECK(orbit->mean_phase == doctest::Approx(-2.681454162434).epsilon(1e-9));

    // Rotating-frame periodicity shows up directly in the stored nodes.
    const Eigen::Index last = orbit->phi_nodes.size() - 1;
    CHECK(std::abs(orbit->phi_nodes[last] - orbit->phi_nodes[0]) < 1e-11);
    CHECK(std::abs(orbit->phi_dot_nodes[last] - orbit->phi_dot_nodes[0]) <
          1e-10);

    const FlowOut again = flow_period(par, p, orbit->y0, 1024);
    CHECK((again.y - orbit->y0).norm() < 1e-11);
}

TEST_CASE("complex multiplier pair sits on the damping circle") {
    PendulumParams par;
    const auto orbit =
        solve_rotating_orbit(par, 0.012, averaged_orbit_guess(par, 0.012));
    REQUIRE(orbit.has_value());
    CHECK(orbit->mult_dom.imag() != 0.0);
    CHECK(std::abs(orbit->mult_dom - std::conj(orbit->mult_sub)) < 1e-9);
    CHECK(std::abs(std::abs(orbit->mult_dom) -
                   std::sqrt(abel_determinant(par))) < 1e-9);
    CHECK(orbit->stable());
}

TEST_CASE("fold of the rotating branch") {
    PendulumParams par;
    const auto fold =
        locate_fold(par, 0.012, averaged_orbit_guess(par, 0.012));
    REQUIRE(fold.has_value());

    // Frozen reference values; identical across step counts 512..2048.
    CHECK(fold->p == doctest::Approx(0.010748731253).epsilon(1e-8));
    CHECK(fold->mean_phase == doctest::Approx(-3.142150386094).epsilon(1e-8));

    // At the fold one multiplier touches +1 and the other carries the whole
    // damping determinant.
    CHECK(std::abs(fold->mult_dom - std::complex<double>(1.0, 0.0)) < 1e-8);
    CHECK(std::abs(fold->mult_sub.real() - abel_determinant(par)) < 1e-8);
    CHECK(std::abs(fold->mult_sub.imag()) < 1e-8);

    // First-order averaged balance: amplitude within a couple of percent,
    // mean phase essentially at the negative lift of pi.
    CHECK(std::abs(fold->p / averaged_fold_amplitude(par) - 1.0) < 0.02);
    CHECK(std::abs(fold->mean_phase + std::numbers::pi) < 0.01);
}

TEST_CASE("branch trace brackets the nose and flags it") {
    PendulumParams par;
    const BranchTrace trace = trace_rotating_branch(
        par, 0.012, averaged_orbit_guess(par, 0.012), -std::numbers::pi - 0.45);
    REQUIRE(trace.points.size() >= 5);
    REQUIRE(trace.fold_between >= 1);
    REQUIRE(trace.fold_between + 1 < static_cast<int>(trace.points.size()));

    double p_min = trace.points.front().p;
    for (const auto& q : trace.points) p_min = std::min(p_min, q.p);
    CHECK(trace.points[trace.fold_between].p < p_min + 2e-4);
    CHECK(trace.points.front().p > p_min + 5e-4);
    CHECK(trace.points.back().p > p_min + 5e-4);

    for (size_t i = 1; i < trace.points.size(); ++i)
        CHECK(trace.points[i].mean_phase < trace.points[i - 1].mean_phase);
    for (const auto& q : trace.points)
        CHECK(std::abs(q.monodromy.determinant() - abel_determinant(par)) <
              1e-10);
}

TEST_CASE("phase-anchored shooting crosses the fold without losing grip") {
    PendulumParams par;
    const auto fold =
        locate_fold(par, 0.012, averaged_orbit_guess(par, 0.012));
    REQUIRE(fold.has_value());

    const auto at_fold = solve_orbit_at_phase(par, fold->mean_phase, fold->p,
                                              fold->y0);
    REQUIRE(at_fold.has_value());
    CHECK(at_fold->p == doctest::Approx(fold->p).epsilon(1e-10));

    const auto upper = solve_orbit_at_phase(par, fold->mean_phase + 0.25,
                                            fold->p, fold->y0);
    const auto lower = solve_orbit_at_phase(par, fold->mean_phase - 0.25,
                                            fold->p, fold->y0);
    REQUIRE(upper.has_value());
    REQUIRE(lower.has_value());
    CHECK(upper->stable());
    CHECK(!lower->stable());
    CHECK(lower->mult_dom.imag() == 0.0);
    CHECK(lower->mult_dom.real() > 1.0);

    // The branch is symmetric about the fold to leading order, and both
    // points must sit above the fold amplitude.
    CHECK(std::abs(upper->p - lower->p) < 1e-6);
    CHECK(upper->p > fold->p);
    CHECK(lower->p > fold->p);
}

TEST_CASE("amplitude below the fold leaves the solver empty-handed") {
    PendulumParams par;
    for (double p : {0.005, 0.009, 0.0105})
        CHECK(!solve_rotating_orbit(par, p, averaged_orbit_guess(par, p)));
}

TEST_CASE("node subsampling keeps endpoints and stride") {
    Eigen::VectorXd nodes(9);
    for (int i = 0; i < 9; ++i) nodes[i] = i * i;
    const Eigen::VectorXd half = subsample_nodes(nodes, 4);
    REQUIRE(half.size() == 5);
    CHECK(half[0] == 0.0);
    CHECK(half[1] == 4.0);
    CHECK(half[4] == 64.0);
    CHECK(subsample_nodes(nodes, 8) == nodes);
    CHECK_THROWS_AS(subsample_nodes(nodes, 3), std::invalid_argument);
}

TEST_CASE("orbit hands off to the loop without a kick") {
    PendulumParams par;
    const auto fold =
        locate_fold(par, 0.012, averaged_orbit_guess(par, 0.012));
    REQUIRE(fold.has_value());
    const auto saddle = solve_orbit_at_phase(par, fold->mean_phase - 0.21,
                                             fold->p, fold->y0);
    REQUIRE(saddle.has_value());
    CHECK(saddle->p == doctest::Approx(0.010990210).epsilon(1e-5));

    const int spp = 512;
    const Eigen::VectorXd phi = subsample_nodes(saddle->phi_nodes, spp);
    const Eigen::VectorXd phi_dot = subsample_nodes(saddle->phi_dot_nodes, spp);

    ControlConfig cfg;
    cfg.gain = 5.0;
    cfg.steps_per_period = spp;
    cfg.set_target_mean(saddle->mean_phase);

    SUBCASE("seeded on the orbit the loop just sits") {
        ClosedLoopSim sim =
            ClosedLoopSim::from_periodic(par, cfg, saddle->p, phi, phi_dot, 0.0);
        const SettleResult res = sim.settle({});
        CHECK(res.converged);
        CHECK(!res.lost);
        CHECK(res.u_sup < 1e-9);
        CHECK(std::abs(res.mean_phase - saddle->mean_phase) < 1e-9);
    }

    SUBCASE("a phase kick dies out and the saddle rotation survives") {
        const Eigen::VectorXd kicked = phi.array() + 0.03;
        ClosedLoopSim sim = ClosedLoopSim::from_periodic(par, cfg, saddle->p,
                                                         kicked, phi_dot, 0.0);
        const SettleResult res = sim.settle({});
        CHECK(res.converged);
        CHECK(!res.lost);
        CHECK(res.u_sup < 1e-5);
        CHECK(std::abs(res.mean_phase - saddle->mean_phase) < 1e-5);
    }

    SUBCASE("without feedback the kick tips the saddle over") {
        ControlConfig open = cfg;
        open.gain = 0.0;
        const Eigen::VectorXd kicked = phi.array() + 0.03;
        ClosedLoopSim sim = ClosedLoopSim::from_periodic(par, open, saddle->p,
                                                         kicked, phi_dot, 0.0);
        const SettleResult res = sim.settle({.max_periods = 200});
        // Off the saddle the free plant either drops the rotation or drifts
        // to the stable orbit a quarter radian away; it never stays put.
        if (!res.lost)
            CHECK(std::abs(res.mean_phase - saddle->mean_phase) > 0.05);
    }
}

TEST_CASE("matched harmonic targets make the higher-order filter transparent") {
    PendulumParams par;
    const auto orbit =
        solve_rotating_orbit(par, 0.012, averaged_orbit_guess(par, 0.012));
    REQUIRE(orbit.has_value());

    const int spp = 512, order = 2;
    const Eigen::VectorXd phi = subsample_nodes(orbit->phi_nodes, spp);
    const Eigen::VectorXd phi_dot = subsample_nodes(orbit->phi_dot_nodes, spp);

    ControlConfig cfg;
    cfg.gain = 0.0;
    cfg.projection_order = order;
    cfg.steps_per_period = spp;
    cfg.set_target_mean(orbit->mean_phase);

    // With only the mean slot filled, the measured input reports how far the
    // low harmonics of the orbit sit from the (zero) harmonic targets.
    ClosedLoopSim meter =
        ClosedLoopSim::from_periodic(par, cfg, orbit->p, phi, phi_dot, 0.0);
    Trajectory rows;
    meter.run_periods(1, &rows);
    REQUIRE(rows.size() == static_cast<size_t>(spp + 1));
    Eigen::VectorXd u(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) u[i] = rows[i].u;
    CHECK(u.cwiseAbs().maxCoeff() > 0.05);

    // Folding that measurement into the target slots has to cancel it.
    const SpectralCoeffs cu = project(u, order, par.period);
    ControlConfig matched = cfg;
    matched.gain = 5.0;
    for (int k = -order; k <= order; ++k) {
        if (k == 0) continue;
        matched.target[k + order] += par.period * cu.at(k);
    }
    double u_mean = 0.0;
    for (int i = 0; i < spp; ++i) u_mean += 0.5 * (u[i] + u[i + 1]);
    matched.target[order] += u_mean / spp;

    ClosedLoopSim sim =
        ClosedLoopSim::from_periodic(par, matched, orbit->p, phi, phi_dot, 0.0);
    const SettleResult res = sim.settle({});
    CHECK(res.converged);
    CHECK(res.u_sup < 1e-7);
    CHECK(std::abs(res.mean_phase - orbit->mean_phase) < 1e-9);
}
