#include "pendcbc/charts.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace pendcbc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

/// Fixed work list, dynamic pickup: each cell writes only its own slot, so
/// the gathered grid is identical for any thread count or completion order.
void run_cells(int total, int threads, const std::function<void(int)>& work) {
    int n = threads > 0 ? threads
                        : int(std::thread::hardware_concurrency());
    n = std::clamp(n, 1, std::max(1, total));
    if (n == 1) {
        for (int k = 0; k < total; ++k) work(k);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (int t = 0; t < n; ++t)
        pool.emplace_back([&] {
            for (int k = next.fetch_add(1); k < total; k = next.fetch_add(1))
                work(k);
        });
    for (auto& th : pool) th.join();
}

Eigen::Vector2d averaged_seed(const PendulumParams& par, double phase,
                              double* p_out) {
    const double pan = averaged_fold_amplitude(par);
    const double c = std::max(0.1, std::cos(phase + std::numbers::pi));
    *p_out = pan / c;
    return Eigen::Vector2d(phase, 0.0);
}

ControlConfig cell_config(const ChartSettings& cs, double gain,
                          const PeriodicOrbit& orbit) {
    ControlConfig cfg = cs.control;
    cfg.gain = gain;
    cfg.set_target_mean(orbit.mean_phase);
    return cfg;
}

ChartGrid empty_grid(const ChartSettings& cs) {
    ChartGrid g;
    g.g_values = Eigen::VectorXd::LinSpaced(cs.g_cells, cs.g_min, cs.g_max);
    g.phase_values =
        Eigen::VectorXd::LinSpaced(cs.phase_cells, cs.phase_min, cs.phase_max);
    g.values = Eigen::MatrixXd::Constant(cs.g_cells, cs.phase_cells, kNaN);
    g.flags.setConstant(cs.g_cells, cs.phase_cells,
                        std::uint8_t(CellFlag::lost));
    return g;
}

std::optional<double> sampled_mean(const PendulumParams& par,
                                   const ChartSettings& cs,
                                   const ControlConfig& base,
                                   const PeriodicOrbit& orbit, double p,
                                   double target) {
    ControlConfig cfg = base;
    cfg.set_target_mean(target);
    const int spp = cfg.steps_per_period;
    ClosedLoopSim sim = ClosedLoopSim::from_periodic(
        par, cfg, p, subsample_nodes(orbit.phi_nodes, spp),
        subsample_nodes(orbit.phi_dot_nodes, spp));
    SettleResult r = sim.settle(cs.sampled_settle);
    if (!r.converged || r.lost) return std::nullopt;
    return r.mean_phase;
}

}  // namespace

const char* to_string(CellFlag flag) {
    switch (flag) {
        case CellFlag::ok: return "ok";
        case CellFlag::lost: return "lost";
        case CellFlag::infinite: return "infinite";
    }
    return "?";
}

void ChartSettings::validate() const {
    if (g_cells < 1 || phase_cells < 1)
        throw std::invalid_argument("chart axes need at least one cell");
    if (g_cells > 1 ? !(g_min < g_max) : !(g_min <= g_max))
        throw std::invalid_argument("chart gain range is empty");
    if (phase_cells > 1 ? !(phase_min < phase_max) : !(phase_min <= phase_max))
        throw std::invalid_argument("chart phase range is empty");
    if (!(g_min >= 0.0))
        throw std::invalid_argument("negative feedback gain");
    if (orbit_steps != 2 * control.steps_per_period)
        throw std::invalid_argument(
            "orbit_steps must be twice control.steps_per_period so orbit "
            "nodes land on the integration stage grid");
    if (!(sigma_p > 0.0) || !(sigma_phi > 0.0))
        throw std::invalid_argument("scale factors must be positive");
    if (!(sampled_dp > 0.0) || !(sampled_dphi > 0.0))
        throw std::invalid_argument("sampled probe steps must be positive");
    control.validate();
}

double branch_tangent_dp(const PendulumParams& par, const PeriodicOrbit& orbit,
                         int steps) {
    FlowOut f = flow_period(par, orbit.p, orbit.y0, steps, false);
    // Shooting system at prescribed mean: unknowns (y0, p), conditions
    // (periodicity, mean). Differentiating in the prescribed value gives the
    // bordered solve below; the amplitude slope is the third component.
    Eigen::Matrix3d J;
    J.topLeftCorner<2, 2>() = f.monodromy - Eigen::Matrix2d::Identity();
    J.topRightCorner<2, 1>() = f.param_sens;
    J.bottomLeftCorner<1, 2>() = f.mean_sens;
    J(2, 2) = f.mean_param_sens;
    Eigen::Vector3d v = J.fullPivLu().solve(Eigen::Vector3d(0.0, 0.0, 1.0));
    return v[2];
}

std::vector<OrbitColumn> solve_orbit_columns(const PendulumParams& par,
                                             const ChartSettings& cs) {
    cs.validate();
    const Eigen::VectorXd phases =
        Eigen::VectorXd::LinSpaced(cs.phase_cells, cs.phase_min, cs.phase_max);
    std::vector<OrbitColumn> cols(cs.phase_cells);

    // Sweep from the high-phase (stable) end downward through the fold; the
    // family is regular in its phase, so warm starts carry straight through.
    const OrbitColumn* prev = nullptr;
    for (int j = cs.phase_cells - 1; j >= 0; --j) {
        const double phase = phases[j];
        std::optional<PeriodicOrbit> orb;
        if (prev)
            orb = solve_orbit_at_phase(par, phase, prev->orbit.p,
                                       prev->orbit.y0, cs.orbit_steps);
        if (!orb) {
            double p_seed = 0.0;
            Eigen::Vector2d y_seed = averaged_seed(par, phase, &p_seed);
            orb = solve_orbit_at_phase(par, phase, p_seed, y_seed,
                                       cs.orbit_steps);
        }
        if (orb) {
            cols[j].orbit = *orb;
            cols[j].dp_dphase = branch_tangent_dp(par, *orb, cs.orbit_steps);
            cols[j].ok = true;
            prev = &cols[j];
        }
    }
    return cols;
}

StabilityCell stability_cell(const PendulumParams& par, const ChartSettings& cs,
                             double gain, const PeriodicOrbit& orbit) {
    StabilityCell cell;
    try {
        LinearizedLoop lin(par, cell_config(cs, gain, orbit), orbit.p,
                           orbit.phi_nodes, cs.monodromy);
        cell.multiplier = lin.multipliers().dominant();
        cell.flag = CellFlag::ok;
    } catch (const std::exception&) {
        cell.flag = CellFlag::lost;
    }
    return cell;
}

ConditionCell condition_cell(const PendulumParams& par, const ChartSettings& cs,
                             double gain, const OrbitColumn& column) {
    ConditionCell cell;
    if (!column.ok) return cell;
    const PeriodicOrbit& orbit = column.orbit;

    const Eigen::Vector2d tangent =
        Eigen::Vector2d(column.dp_dphase / cs.sigma_p, 1.0 / cs.sigma_phi)
            .normalized();

    double dmean_dp = 0.0, dmean_dtarget = 0.0;
    try {
        const ControlConfig cfg = cell_config(cs, gain, orbit);
        if (cs.row2 == Row2Policy::linearized) {
            LinearizedLoop lin(par, cfg, orbit.p, orbit.phi_nodes,
                               cs.monodromy);
            MeanResponse mr = lin.mean_response();
            if (mr.singular) {
                cell.flag = CellFlag::infinite;
                cell.jac.row(0) = tangent.transpose();
                cell.cond = kInf;
                cell.sigma_min = cell.sigma_max = kNaN;
                cell.row2_norm = kInf;
                return cell;
            }
            dmean_dp = mr.dmean_dp;
            dmean_dtarget = mr.dmean_dtarget;
        } else {
            auto probe = [&](double p, double target) {
                return sampled_mean(par, cs, cfg, orbit, p, target);
            };
            const double dp = cs.sampled_dp, dt = cs.sampled_dphi;
            auto pp = probe(orbit.p + dp, orbit.mean_phase);
            auto pm = probe(orbit.p - dp, orbit.mean_phase);
            auto tp = probe(orbit.p, orbit.mean_phase + dt);
            auto tm = probe(orbit.p, orbit.mean_phase - dt);
            if (!pp || !pm || !tp || !tm) return cell;
            dmean_dp = (*pp - *pm) / (2.0 * dp);
            dmean_dtarget = (*tp - *tm) / (2.0 * dt);
        }
    } catch (const std::exception&) {
        return cell;
    }

    cell.jac.row(0) = tangent.transpose();
    cell.jac(1, 0) = (cs.sigma_p / cs.sigma_phi) * dmean_dp;
    cell.jac(1, 1) = dmean_dtarget - 1.0;
    cell.row2_norm = cell.jac.row(1).norm();

    Eigen::JacobiSVD<Eigen::Matrix2d> svd(cell.jac);
    cell.sigma_max = svd.singularValues()[0];
    cell.sigma_min = svd.singularValues()[1];
    cell.cond = cell.sigma_min > 0.0 ? cell.sigma_max / cell.sigma_min : kInf;
    cell.flag = cell.sigma_min > 0.0 ? CellFlag::ok : CellFlag::infinite;
    return cell;
}

ChartGrid stability_chart(const PendulumParams& par, const ChartSettings& cs,
                          const std::vector<OrbitColumn>& columns) {
    cs.validate();
    if (int(columns.size()) != cs.phase_cells)
        throw std::invalid_argument("column count does not match the grid");
    ChartGrid grid = empty_grid(cs);
    run_cells(cs.g_cells * cs.phase_cells, cs.threads, [&](int k) {
        const int i = k / cs.phase_cells;
        const int j = k % cs.phase_cells;
        if (!columns[j].ok) return;
        StabilityCell cell =
            stability_cell(par, cs, grid.g_values[i], columns[j].orbit);
        grid.flags(i, j) = std::uint8_t(cell.flag);
        if (cell.flag == CellFlag::ok)
            grid.values(i, j) = std::abs(cell.multiplier);
    });
    return grid;
}

ChartGrid stability_chart(const PendulumParams& par, const ChartSettings& cs) {
    return stability_chart(par, cs, solve_orbit_columns(par, cs));
}

ChartGrid condition_chart(const PendulumParams& par, const ChartSettings& cs,
                          const std::vector<OrbitColumn>& columns) {
    cs.validate();
    if (int(columns.size()) != cs.phase_cells)
        throw std::invalid_argument("column count does not match the grid");
    ChartGrid grid = empty_grid(cs);
    run_cells(cs.g_cells * cs.phase_cells, cs.threads, [&](int k) {
        const int i = k / cs.phase_cells;
        const int j = k % cs.phase_cells;
        ConditionCell cell =
            condition_cell(par, cs, grid.g_values[i], columns[j]);
        grid.flags(i, j) = std::uint8_t(cell.flag);
        if (cell.flag != CellFlag::lost) grid.values(i, j) = cell.cond;
    });
    return grid;
}

ChartGrid condition_chart(const PendulumParams& par, const ChartSettings& cs) {
    return condition_chart(par, cs, solve_orbit_columns(par, cs));
}

Eigen::VectorXd unit_modulus_contour(const ChartGrid& stability) {
    const int rows = int(stability.values.rows());
    const int cols = int(stability.values.cols());
    Eigen::VectorXd contour = Eigen::VectorXd::Constant(rows, kNaN);
    for (int i = 0; i < rows; ++i) {
        for (int j = cols - 2; j >= 0; --j) {
            if (stability.flag(i, j) != CellFlag::ok ||
                stability.flag(i, j + 1) != CellFlag::ok)
                continue;
            const double lo = stability.values(i, j);
            const double hi = stability.values(i, j + 1);
            if (hi < 1.0 && lo >= 1.0) {
                const double ph_lo = stability.phase_values[j];
                const double ph_hi = stability.phase_values[j + 1];
                contour[i] = ph_lo + (lo - 1.0) * (ph_hi - ph_lo) / (lo - hi);
                break;
            }
        }
    }
    return contour;
}

std::optional<std::pair<double, double>> fold_phase_window(
    const PendulumParams& par, double halfwidth, int steps) {
    auto fold =
        locate_fold(par, 0.012, averaged_orbit_guess(par, 0.012), steps);
    if (!fold) return std::nullopt;
    return std::make_pair(fold->mean_phase - halfwidth,
                          fold->mean_phase + halfwidth);
}

}  // namespace pendcbc
