#include "doctest.h"

#include <cmath>
#include <complex>
#include <numbers>

#include "pendcbc/bvp.hpp"
#include "pendcbc/closed_loop.hpp"
#include "pendcbc/floquet.hpp"

using namespace pendcbc;

namespace {

struct Orbits {
    PendulumParams par;
    PeriodicOrbit stable;
    PeriodicOrbit saddle;
};

const Orbits& orbits() {
    static const Orbits fix = [] {
        Orbits o;
        auto st =
            solve_rotating_orbit(o.par, 0.02, averaged_orbit_guess(o.par, 0.02));
        REQUIRE(st.has_value());
        o.stable = *st;
        auto fold = locate_fold(o.par, 0.012, averaged_orbit_guess(o.par, 0.012));
        REQUIRE(fold.has_value());
        auto sad = solve_orbit_at_phase(o.par, fold->mean_phase - 0.2,
                                        fold->p * 1.01, fold->y0);
        REQUIRE(sad.has_value());
        o.saddle = *sad;
        return o;
    }();
    return fix;
}

ControlConfig loop_config(double gain) {
    ControlConfig cfg;
    cfg.gain = gain;
    cfg.projection_order = 0;
    cfg.steps_per_period = 512;
    return cfg;
}

double abel_determinant(const PendulumParams& par) {
    return std::exp(-par.damping * par.period /
                    (par.mass * par.length * par.length));
}

}  // namespace

TEST_CASE("zero gain collapses the spectrum to the plant pair") {
    const Orbits& o = orbits();
    ControlConfig cfg = loop_config(0.0);
    cfg.set_target_mean(o.stable.mean_phase);

    LinearizedLoop lin(o.par, cfg, o.stable.p, o.stable.phi_nodes);
    CHECK(lin.dim() == 2 * (2 * 64 + 1));
    FloquetResult fr = lin.multipliers();

    // Feedback off: the history carries nothing forward, so only the two
    // plant multipliers survive and everything else is numerically zero.
    const bool direct = std::abs(fr.multipliers[0] - o.stable.mult_dom) < 1e-8;
    const bool conj =
        std::abs(fr.multipliers[0] - std::conj(o.stable.mult_dom)) < 1e-8;
    CHECK((direct || conj));
    CHECK(std::abs(fr.multipliers[2]) < 1e-6);
    CHECK(std::abs(fr.multipliers[0] * fr.multipliers[1]) ==
          doctest::Approx(abel_determinant(o.par)).epsilon(1e-9));
}

TEST_CASE("feedback pulls the saddle inside the unit circle") {
    const Orbits& o = orbits();
    REQUIRE(o.saddle.mult_dom.real() > 1.0);

    ControlConfig off = loop_config(0.0);
    off.set_target_mean(o.saddle.mean_phase);
    FloquetResult f0 =
        closed_loop_multipliers(o.par, off, o.saddle.p, o.saddle.phi_nodes);
    CHECK(f0.multipliers[0].real() ==
          doctest::Approx(o.saddle.mult_dom.real()).epsilon(1e-8));
    CHECK(std::abs(f0.multipliers[0].imag()) < 1e-9);

    ControlConfig on = loop_config(5.0);
    on.set_target_mean(o.saddle.mean_phase);
    FloquetResult f5 =
        closed_loop_multipliers(o.par, on, o.saddle.p, o.saddle.phi_nodes);
    CHECK(std::abs(f5.multipliers[0]) < 0.95);
}

TEST_CASE("mesh doubling leaves the dominant multiplier in place") {
    const Orbits& o = orbits();
    ControlConfig cfg = loop_config(5.0);
    cfg.set_target_mean(o.saddle.mean_phase);

    FloquetResult coarse =
        closed_loop_multipliers(o.par, cfg, o.saddle.p, o.saddle.phi_nodes);
    MonodromySettings fine;
    fine.mesh = 128;
    FloquetResult dense = closed_loop_multipliers(o.par, cfg, o.saddle.p,
                                                  o.saddle.phi_nodes, fine);
    CHECK(std::abs(coarse.multipliers[0] - dense.multipliers[0]) < 1e-5);
}

TEST_CASE("subspace iteration reproduces the dense leading cluster") {
    const Orbits& o = orbits();
    ControlConfig cfg = loop_config(5.0);
    cfg.set_target_mean(o.stable.mean_phase);

    LinearizedLoop lin(o.par, cfg, o.stable.p, o.stable.phi_nodes);
    FloquetResult dense = lin.multipliers();

    MonodromySettings force_iter;
    force_iter.dense_dim_limit = 10;
    LinearizedLoop lin2(o.par, cfg, o.stable.p, o.stable.phi_nodes, force_iter);
    FloquetResult iter = lin2.multipliers();

    REQUIRE(iter.iterative);
    CHECK(std::abs(std::abs(iter.multipliers[0]) -
                   std::abs(dense.multipliers[0])) < 1e-8);
}

TEST_CASE("partial relaxation widens the state and keeps the plant pair") {
    const Orbits& o = orbits();
    ControlConfig cfg = loop_config(0.0);
    cfg.relaxation = 0.5;
    cfg.set_target_mean(o.stable.mean_phase);

    LinearizedLoop lin(o.par, cfg, o.stable.p, o.stable.phi_nodes);
    CHECK(lin.dim() == 2 * (2 * 64 + 1) + 2 * (64 + 1));
    FloquetResult fr = lin.multipliers();

    // Gain zero decouples the filter recursion from the plant: the dominant
    // pair is untouched and the recursion contributes nothing above 1 - R.
    CHECK(std::abs(std::abs(fr.multipliers[0]) - std::abs(o.stable.mult_dom)) <
          1e-8);
}

TEST_CASE("one period of the operator matches the perturbed simulator") {
    const Orbits& o = orbits();
    const double T = o.par.period;
    ControlConfig cfg = loop_config(5.0);
    cfg.set_target_mean(o.stable.mean_phase);

    LinearizedLoop lin(o.par, cfg, o.stable.p, o.stable.phi_nodes);
    const int M = 64;
    const double eps = 1e-5;
    auto bump = [&](double t) {
        return eps * (0.5 + std::sin(2.0 * std::numbers::pi * t / T));
    };
    auto bump_dot = [&](double t) {
        return eps * (2.0 * std::numbers::pi / T) *
               std::cos(2.0 * std::numbers::pi * t / T);
    };

    // Discretized perturbation: periodic, so both delay windows sample the
    // same function.
    Eigen::VectorXd x = Eigen::VectorXd::Zero(lin.dim());
    for (int i = 0; i <= 2 * M; ++i) {
        const double t = (i - 2 * M) * T / M;
        x[i] = bump(t);
        x[2 * M + 1 + i] = bump_dot(t);
    }
    Eigen::VectorXd pred = lin.apply(x);

    // The same perturbation handed to the nonlinear rig on top of the orbit.
    const int spp = 512;
    Eigen::VectorXd phi = subsample_nodes(o.stable.phi_nodes, spp);
    Eigen::VectorXd phi_dot = subsample_nodes(o.stable.phi_dot_nodes, spp);
    for (int j = 0; j <= spp; ++j) {
        const double t = j * T / spp;
        phi[j] += bump(t);
        phi_dot[j] += bump_dot(t);
    }
    ClosedLoopSim sim =
        ClosedLoopSim::from_periodic(o.par, cfg, o.stable.p, phi, phi_dot);
    sim.run_periods(1);

    const std::int64_t newest = sim.history().newest_index();
    const Eigen::VectorXd orbit_phi = subsample_nodes(o.stable.phi_nodes, spp);
    double worst = 0.0, scale = 0.0;
    for (int i = 0; i <= M; ++i) {
        const double dev_sim =
            sim.history().node(newest - spp + i * (spp / M)).phi -
            orbit_phi[i * (spp / M)];
        const double dev_lin = pred[M + i];
        worst = std::max(worst, std::abs(dev_sim - dev_lin));
        scale = std::max(scale, std::abs(dev_lin));
    }
    REQUIRE(scale > 0.1 * eps);
    CHECK(worst < 0.05 * scale);
}

TEST_CASE("settled response rows match the rig's finite differences") {
    const Orbits& o = orbits();
    ControlConfig cfg = loop_config(5.0);
    cfg.set_target_mean(o.saddle.mean_phase);

    LinearizedLoop lin(o.par, cfg, o.saddle.p, o.saddle.phi_nodes);
    MeanResponse mr = lin.mean_response();
    REQUIRE(!mr.singular);

    SettlePolicy pol;
    pol.mean_tol = 1e-10;
    pol.max_periods = 2000;
    auto settle_at = [&](double p, double target) {
        ControlConfig c = cfg;
        c.set_target_mean(target);
        ClosedLoopSim s = ClosedLoopSim::from_periodic(
            o.par, c, p, subsample_nodes(o.saddle.phi_nodes, 512),
            subsample_nodes(o.saddle.phi_dot_nodes, 512));
        SettleResult r = s.settle(pol);
        REQUIRE(r.converged);
        return r.mean_phase;
    };
    const double base = settle_at(o.saddle.p, o.saddle.mean_phase);
    const double dt = 1e-4, dp = 1e-6;
    const double fd_target =
        (settle_at(o.saddle.p, o.saddle.mean_phase + dt) - base) / dt;
    const double fd_p = (settle_at(o.saddle.p + dp, o.saddle.mean_phase) - base) / dp;

    CHECK(mr.dmean_dtarget == doctest::Approx(fd_target).epsilon(1e-3));
    CHECK(mr.dmean_dp == doctest::Approx(fd_p).epsilon(1e-3));
}
