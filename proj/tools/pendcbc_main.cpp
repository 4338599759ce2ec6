#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pendcbc/artifacts.hpp"
#include "pendcbc/bvp.hpp"
#include "pendcbc/charts.hpp"
#include "pendcbc/closed_loop.hpp"
#include "pendcbc/config.hpp"
#include "pendcbc/continuation.hpp"
#include "pendcbc/floquet.hpp"

namespace {

using namespace pendcbc;
namespace fs = std::filesystem;

std::string hash_hex(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
}

int fail(const std::string& detail) {
    std::cerr << "pendcbc-error: " << detail << "\n";
    return 1;
}

fs::path out_path(const RunConfig& rc, const std::string& name) {
    return fs::path(rc.output_dir) / name;
}

/// Amplitude seed for an orbit solve pinned at a mean phase, from the
/// first-order averaged balance. Valid on both sides of the fold.
double averaged_seed_p(const PendulumParams& par, double phase) {
    return averaged_fold_amplitude(par) /
           std::max(0.1, std::cos(phase + std::numbers::pi));
}

std::vector<BranchRow> experiment_rows(const Branch& br) {
    std::vector<BranchRow> rows;
    rows.reserve(br.points.size());
    for (size_t i = 0; i < br.points.size(); ++i) {
        const BranchPoint& pt = br.points[i];
        BranchRow r;
        r.index = long(i);
        r.p = pt.p;
        r.phi0 = pt.phi0;
        r.p_tan = pt.tangent[0];
        r.phi0_tan = pt.tangent[1];
        r.residual = pt.residual_norm;
        r.periods_used = pt.periods_used;
        r.u_sup = pt.u_sup;
        r.flag = to_string(pt.flag);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<BranchRow> oracle_rows(const BranchTrace& tr,
                                   const ContinuationSettings& cc) {
    const size_t n = tr.points.size();
    std::vector<BranchRow> rows(n);
    int fold = -1;
    for (size_t i = 1; i + 1 < n; ++i)
        if (fold < 0 || tr.points[i].p < tr.points[fold].p) fold = int(i);
    if (fold >= 0 && (tr.points[fold].p >= tr.points.front().p ||
                      tr.points[fold].p >= tr.points.back().p))
        fold = -1;  // the minimum must be an interior nose
    for (size_t i = 0; i < n; ++i) {
        const PeriodicOrbit& o = tr.points[i];
        BranchRow& r = rows[i];
        r.index = long(i);
        r.p = o.p;
        r.phi0 = o.mean_phase;
        r.residual = o.residual;
        r.periods_used = o.iterations;
        r.u_sup = 0.0;
        r.flag = int(i) == fold ? "fold"
                                : (o.stable() ? "stable-guess"
                                              : "unstable-guess");
        // Scaled secant along the march, like the experiment-side tangents.
        const size_t a = i + 1 < n ? i : i - 1;
        const size_t b = i + 1 < n ? i + 1 : i;
        Eigen::Vector2d d((tr.points[b].p - tr.points[a].p) / cc.sigma_p,
                          (tr.points[b].mean_phase - tr.points[a].mean_phase) /
                              cc.sigma_phi);
        if (d.norm() > 0.0) d.normalize();
        r.p_tan = d[0];
        r.phi0_tan = d[1];
    }
    return rows;
}

int run_simulate(const RunConfig& rc, const ArtifactMeta& meta) {
    const PendulumParams& par = rc.model;
    ControlConfig cfg = rc.control;
    std::optional<ClosedLoopSim> sim;
    if (rc.simulate.start == "cold") {
        if (std::isnan(rc.target_mean))
            cfg.set_target_mean(rc.simulate.phi0);
        sim.emplace(par, cfg, rc.simulate.amplitude,
                    PlantState{rc.simulate.phi0, rc.simulate.phi_dot0, 0.0});
    } else {
        const double phase = rc.simulate.orbit_phase;
        const auto orb = solve_orbit_at_phase(
            par, phase, averaged_seed_p(par, phase),
            Eigen::Vector2d(phase, 0.0), cfg.steps_per_period);
        if (!orb)
            return fail("no rotating orbit found at mean phase " +
                        format_number(phase));
        if (std::isnan(rc.target_mean)) cfg.set_target_mean(orb->mean_phase);
        sim.emplace(ClosedLoopSim::from_periodic(
            par, cfg, orb->p, orb->phi_nodes, orb->phi_dot_nodes));
        std::cout << "start orbit: p = " << format_number(orb->p)
                  << ", avg phase = " << format_number(orb->mean_phase)
                  << (orb->stable() ? " (stable)\n" : " (unstable)\n");
    }

    Trajectory traj;
    sim->run_periods(rc.simulate.periods, &traj);
    write_trajectory_csv(out_path(rc, "trajectory.csv").string(), meta, traj);
    std::cout << "wrote " << out_path(rc, "trajectory.csv").string() << " ("
              << traj.size() << " rows)\n";
    if (sim->lost())
        return fail("loss of control: rotation dropped at t = " +
                    format_number(sim->time()) + " s");
    std::cout << "final period mean = "
              << format_number(sim->last_period_mean())
              << " rad, sup|u| = " << format_number(sim->last_period_u_sup())
              << " rad\n";
    return 0;
}

int run_continue_experiment(const RunConfig& rc, const ArtifactMeta& meta) {
    SimExperiment exp(rc.model, rc.control);
    const Branch br =
        continue_branch(exp, rc.p_start, rc.phi0_guess, rc.continuation);
    if (br.points.empty())
        return fail("continuation accepted no points from p = " +
                    format_number(rc.p_start));
    write_branch_csv(out_path(rc, "branch_experiment.csv").string(), meta,
                     experiment_rows(br));
    int unstable = 0, lost = 0;
    for (const auto& pt : br.points) {
        unstable += pt.flag == BranchPoint::Flag::unstable_guess;
        lost += pt.flag == BranchPoint::Flag::lost;
    }
    std::cout << "wrote " << out_path(rc, "branch_experiment.csv").string()
              << " (" << br.points.size() << " points, fold index "
              << br.fold_index << ", " << unstable << " unstable, " << lost
              << " lost)\n";
    return 0;
}

int run_continue_bvp(const RunConfig& rc, const ArtifactMeta& meta) {
    const PendulumParams& par = rc.model;
    const int steps = 2 * rc.control.steps_per_period;
    const Eigen::Vector2d y0g = averaged_orbit_guess(par, rc.p_start);
    const BranchTrace tr = trace_rotating_branch(
        par, rc.p_start, y0g, rc.continuation.phi_min,
        rc.continuation.max_points, steps);
    if (tr.points.empty())
        return fail("no rotating orbit found at p = " +
                    format_number(rc.p_start));
    write_branch_csv(out_path(rc, "branch_oracle.csv").string(), meta,
                     oracle_rows(tr, rc.continuation));
    std::cout << "wrote " << out_path(rc, "branch_oracle.csv").string() << " ("
              << tr.points.size() << " points)\n";

    const auto fold = locate_fold(par, rc.p_start, y0g, steps);
    if (!fold)
        return fail("fold refinement failed from p = " +
                    format_number(rc.p_start));
    Eigen::VectorXd t(fold->phi_nodes.size());
    for (Eigen::Index i = 0; i < t.size(); ++i)
        t[i] = par.period * double(i) / double(steps);
    write_orbit_csv(out_path(rc, "fold_orbit.csv").string(), meta, t,
                    fold->phi_nodes, fold->phi_dot_nodes);
    write_orbit_json(out_path(rc, "fold_orbit.json").string(), fold->p,
                     fold->mean_phase, {fold->mult_dom, fold->mult_sub});
    std::cout << "fold: p = " << format_number(fold->p) << ", avg phase = "
              << format_number(fold->mean_phase) << ", |mu| = "
              << format_number(std::abs(fold->mult_dom)) << "\n";
    return 0;
}

/// Charts share their setup: resolve the phase window (0,0 means center on
/// the fold), build the grid, write the matrix and its axes sidecar.
int run_chart(const RunConfig& rc, const ArtifactMeta& meta, bool stability) {
    const PendulumParams& par = rc.model;
    ChartSettings cs = rc.charts;
    if (cs.phase_min == 0.0 && cs.phase_max == 0.0) {
        const auto window =
            fold_phase_window(par, rc.chart_halfwidth, cs.orbit_steps);
        if (!window)
            return fail("fold not found, cannot center the phase window");
        cs.phase_min = window->first;
        cs.phase_max = window->second;
        std::cout << "phase window [" << format_number(cs.phase_min) << ", "
                  << format_number(cs.phase_max) << "] around the fold\n";
    }
    const ChartGrid grid = stability ? stability_chart(par, cs)
                                     : condition_chart(par, cs);
    const std::string base = stability ? "stability_chart" : "condition_chart";
    write_chart_csv(out_path(rc, base + ".csv").string(), meta, grid,
                    rc.chart_format);
    write_chart_axes_json(out_path(rc, base + "_axes.json").string(), grid);

    int lost = 0;
    for (int i = 0; i < grid.values.rows(); ++i)
        for (int j = 0; j < grid.values.cols(); ++j)
            lost += grid.flag(i, j) != CellFlag::ok;
    std::cout << "wrote " << out_path(rc, base + ".csv").string() << " ("
              << grid.values.rows() << "x" << grid.values.cols()
              << " cells, " << lost << " flagged)\n";
    if (stability && grid.values.cols() > 1) {
        const Eigen::VectorXd contour = unit_modulus_contour(grid);
        int crossings = 0;
        for (Eigen::Index i = 0; i < contour.size(); ++i)
            crossings += !std::isnan(contour[i]);
        std::cout << crossings << " of " << contour.size()
                  << " gain rows cross |mu| = 1\n";
    }
    return 0;
}

int run_calibrate(const RunConfig& rc, const ArtifactMeta& meta) {
    const std::vector<double> lengths = {0.2, 0.25, 0.3};
    const double window_lo = 0.010, window_hi = 0.012;
    const auto rows =
        calibration_sweep(rc.model, lengths, 2 * rc.control.steps_per_period);

    nlohmann::ordered_json j;
    j["comment"] =
        "Fold of the free rotating branch for candidate pendulum lengths; "
        "regenerate with the calibrate subcommand.";
    j["mass"] = rc.model.mass;
    j["damping"] = rc.model.damping;
    j["omega"] = rc.model.omega;
    j["target_window_m"] = {window_lo, window_hi};
    double chosen = 0.0;
    auto sweep = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
        const bool in_window = row.found && row.fold_p >= window_lo &&
                               row.fold_p <= window_hi;
        if (in_window && chosen == 0.0) chosen = row.length;
        nlohmann::ordered_json entry;
        entry["length"] = row.length;
        entry["fold_amplitude"] = row.fold_p;
        entry["fold_mean_phase"] = row.fold_mean;
        entry["averaged_amplitude"] = row.averaged_p;
        entry["in_window"] = in_window;
        sweep.push_back(std::move(entry));
        std::cout << "length " << format_number(row.length) << ": fold p = "
                  << (row.found ? format_number(row.fold_p) : "not found")
                  << (in_window ? " (in window)\n" : "\n");
    }
    if (chosen == 0.0)
        return fail("no candidate length puts the fold inside [" +
                    format_number(window_lo) + ", " +
                    format_number(window_hi) + "] m");
    j["chosen_length"] = chosen;
    j["sweep"] = std::move(sweep);

    const auto path = out_path(rc, "calibration.json");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) return fail(path.string() + ": cannot open for writing");
    out << "{\n  \"comment\": " << j["comment"].dump() << ",\n";
    out << "  \"mass\": " << j["mass"].dump() << ",\n";
    out << "  \"damping\": " << j["damping"].dump() << ",\n";
    out << "  \"omega\": " << j["omega"].dump() << ",\n";
    out << "  \"target_window_m\": " << j["target_window_m"].dump() << ",\n";
    out << "  \"chosen_length\": " << j["chosen_length"].dump() << ",\n";
    out << "  \"sweep\": " << j["sweep"].dump(2) << "\n}\n";
    std::cout << "wrote " << path.string() << " (chosen length "
              << format_number(chosen) << " m)\n";
    return 0;
}

std::string stored_hash(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] != '#') break;
        const std::string key = "# config-hash: ";
        if (line.rfind(key, 0) == 0) return line.substr(key.size());
    }
    return "";
}

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

int run_verify(const RunConfig& rc, const ArtifactMeta& meta) {
    const PendulumParams& par = rc.model;
    const ContinuationSettings& cc = rc.continuation;

    // Branch artifacts are reused when they carry the current config hash,
    // recomputed otherwise.
    const std::string oracle_path = out_path(rc, "branch_oracle.csv").string();
    const std::string exp_path =
        out_path(rc, "branch_experiment.csv").string();
    if (stored_hash(oracle_path) != meta.config_hash) {
        std::cout << "refreshing " << oracle_path << "\n";
        ArtifactMeta m = meta;
        m.tool = "continue-bvp";
        if (int rcode = run_continue_bvp(rc, m)) return rcode;
    }
    if (stored_hash(exp_path) != meta.config_hash) {
        std::cout << "refreshing " << exp_path << "\n";
        ArtifactMeta m = meta;
        m.tool = "continue-experiment";
        if (int rcode = run_continue_experiment(rc, m)) return rcode;
    }
    const auto oracle = read_branch_csv(oracle_path);
    const auto exper = read_branch_csv(exp_path);

    std::vector<Check> checks;

    {
        Check c{"oracle-fold-interior-minimum"};
        int fold = -1;
        for (size_t i = 0; i < oracle.size(); ++i)
            if (oracle[i].flag == "fold") fold = int(i);
        if (fold > 0 && fold + 1 < int(oracle.size())) {
            const double pf = oracle[fold].p;
            c.pass = true;
            for (const auto& r : oracle)
                if (r.p < pf) c.pass = false;
            c.detail = "p0 = " + format_number(pf) + " at avg phase " +
                       format_number(oracle[fold].phi0);
        } else {
            c.detail = "no interior fold row";
        }
        checks.push_back(std::move(c));
    }
    {
        Check c{"experiment-traverses-fold"};
        int fold = -1, unstable = 0;
        for (size_t i = 0; i < exper.size(); ++i) {
            if (exper[i].flag == "fold") fold = int(i);
            unstable += exper[i].flag == "unstable-guess";
        }
        c.pass = fold >= 0 && unstable >= 10;
        c.detail = "fold index " + std::to_string(fold) + ", " +
                   std::to_string(unstable) + " unstable points";
        checks.push_back(std::move(c));
    }
    {
        Check c{"experiment-residuals-in-tolerance"};
        double worst = 0.0;
        int accepted = 0;
        for (const auto& r : exper) {
            if (r.flag == "lost") continue;
            ++accepted;
            worst = std::max(worst, std::abs(r.residual));
        }
        c.pass = accepted > 0 && worst <= cc.newton_tol;
        c.detail = "max |r| = " + format_number(worst) + " over " +
                   std::to_string(accepted) + " points (tol " +
                   format_number(cc.newton_tol) + ")";
        checks.push_back(std::move(c));
    }
    {
        // Every accepted experiment point against the oracle branch point at
        // the same avg phase, solved fresh with the nearest cached row as
        // the seed.
        Check c{"experiment-matches-oracle"};
        const int steps = 2 * rc.control.steps_per_period;
        double worst_dp = 0.0, worst_dphi = 0.0;
        int compared = 0, misses = 0;
        for (const auto& r : exper) {
            if (r.flag == "lost") continue;
            auto orb = solve_orbit_at_phase(par, r.phi0,
                                            averaged_seed_p(par, r.phi0),
                                            Eigen::Vector2d(r.phi0, 0.0),
                                            steps);
            if (!orb) {
                const BranchRow* near = nullptr;
                for (const auto& o : oracle)
                    if (!near || std::abs(o.phi0 - r.phi0) <
                                     std::abs(near->phi0 - r.phi0))
                        near = &o;
                if (near)
                    orb = solve_orbit_at_phase(
                        par, r.phi0, near->p,
                        Eigen::Vector2d(r.phi0, 0.0), steps);
            }
            if (!orb) {
                ++misses;
                continue;
            }
            ++compared;
            worst_dp = std::max(worst_dp, std::abs(orb->p - r.p));
            worst_dphi = std::max(worst_dphi, std::abs(orb->mean_phase - r.phi0));
        }
        c.pass = compared > 0 && misses == 0 &&
                 worst_dp <= 3.0 * cc.sigma_p &&
                 worst_dphi <= 3.0 * cc.sigma_phi;
        c.detail = "max dp = " + format_number(worst_dp) + " m, max dphi = " +
                   format_number(worst_dphi) + " rad over " +
                   std::to_string(compared) + " points";
        if (misses) c.detail += ", " + std::to_string(misses) + " unmatched";
        checks.push_back(std::move(c));
    }
    {
        Check c{"control-input-noninvasive"};
        const double eps = cc.effective_settle().mean_tol;
        double worst = 0.0;
        for (const auto& r : exper)
            if (r.flag != "lost") worst = std::max(worst, r.u_sup);
        c.pass = worst <= 10.0 * eps;
        c.detail = "max sup|u| = " + format_number(worst) + " rad (budget " +
                   format_number(10.0 * eps) + ")";
        checks.push_back(std::move(c));
    }

    bool all = true;
    for (const auto& c : checks) {
        all = all && c.pass;
        std::printf("%s  %-34s %s\n", c.pass ? "PASS" : "FAIL",
                    c.name.c_str(), c.detail.c_str());
    }
    if (!all) {
        std::string names;
        for (const auto& c : checks)
            if (!c.pass) names += (names.empty() ? "" : ", ") + c.name;
        return fail("verification failed: " + names);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rotating-solution continuation for the vertically excited "
                 "pendulum: simulated control-based experiment, direct "
                 "solver oracle, stability and conditioning charts"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_override, format_override;
    int threads_override = -1;
    app.add_option("--config", config_path,
                   "configuration file (key = value lines)")
        ->check(CLI::ExistingFile);
    app.add_option("--out", out_override,
                   "output directory (overrides output_dir)");
    app.add_option("--threads", threads_override,
                   "worker threads for chart cells (overrides charts.threads)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--format", format_override,
                   "chart CSV layout (overrides charts.format)")
        ->check(CLI::IsMember({"wide", "long"}));

    auto* sc_sim = app.add_subcommand(
        "simulate", "run the controlled loop and export the trajectory");
    auto* sc_cexp = app.add_subcommand(
        "continue-experiment",
        "trace the rotating branch through the settled experiment");
    auto* sc_cbvp = app.add_subcommand(
        "continue-bvp", "trace the branch with the direct periodic solver");
    auto* sc_stab = app.add_subcommand(
        "stability-chart",
        "dominant closed-loop multiplier over the gain-phase plane");
    auto* sc_cond = app.add_subcommand(
        "condition-chart",
        "continuation Jacobian conditioning over the gain-phase plane");
    auto* sc_cal = app.add_subcommand(
        "calibrate", "sweep pendulum lengths for a fold in the target window");
    auto* sc_ver = app.add_subcommand(
        "verify", "cross-check the experiment branch against the oracle");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig rc = config_path.empty()
                           ? parse_config_text("", "(defaults)")
                           : parse_config(config_path);
        if (!out_override.empty()) rc.output_dir = out_override;
        if (threads_override >= 0) rc.charts.threads = threads_override;
        if (!format_override.empty()) rc.chart_format = format_override;

        write_resolved_config(rc, out_path(rc, "resolved.cfg").string());

        ArtifactMeta meta;
        meta.config_hash = hash_hex(config_hash(rc));
        if (sc_sim->parsed()) {
            meta.tool = "simulate";
            return run_simulate(rc, meta);
        }
        if (sc_cexp->parsed()) {
            meta.tool = "continue-experiment";
            return run_continue_experiment(rc, meta);
        }
        if (sc_cbvp->parsed()) {
            meta.tool = "continue-bvp";
            return run_continue_bvp(rc, meta);
        }
        if (sc_stab->parsed()) {
            meta.tool = "stability-chart";
            return run_chart(rc, meta, true);
        }
        if (sc_cond->parsed()) {
            meta.tool = "condition-chart";
            return run_chart(rc, meta, false);
        }
        if (sc_cal->parsed()) {
            meta.tool = "calibrate";
            return run_calibrate(rc, meta);
        }
        if (sc_ver->parsed()) {
            meta.tool = "verify";
            return run_verify(rc, meta);
        }
        return fail("no subcommand selected");
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}
