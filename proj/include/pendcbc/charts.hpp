#pragma once

#include <Eigen/Core>
#include <complex>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "pendcbc/bvp.hpp"
#include "pendcbc/closed_loop.hpp"
#include "pendcbc/floquet.hpp"
#include "pendcbc/params.hpp"

namespace pendcbc {

/// Per-cell outcome. `lost` covers a failed orbit solve or a cell whose
/// evaluation failed outright; `infinite` marks a singular settled-response
/// system (a multiplier at 1), where the condition number has no finite value.
enum class CellFlag : std::uint8_t { ok = 0, lost = 1, infinite = 2 };

const char* to_string(CellFlag flag);

/// Where the mismatch-derivative row of the cell Jacobian comes from:
/// the linearized settled response (cheap, default) or finite differences on
/// the settled rig itself at reduced precision.
enum class Row2Policy { linearized, sampled };

struct ChartSettings {
    int g_cells = 60;
    int phase_cells = 60;
    /// The default gain axis ends below the loop's own high-gain
    /// destabilization (near G = 13.9 for the default plant, where the delayed
    /// derivative action turns the dominant pair unstable again), so the
    /// uniformly stabilized band sits inside the scan.
    double g_min = 0.0;
    double g_max = 12.0;
    /// Phase window of the orbit family. No usable default exists before the
    /// fold is located; fold_phase_window() supplies the standard one.
    double phase_min = 0.0;
    double phase_max = 0.0;
    int orbit_steps = 1024;
    /// Worker threads for cell evaluation; 0 means hardware concurrency.
    /// Results are identical for any thread count.
    int threads = 0;
    /// Scaling of the mixed-unit continuation variables, as in the tracer.
    double sigma_p = 2e-4;
    double sigma_phi = 1e-4;
    Row2Policy row2 = Row2Policy::linearized;
    /// Reduced-precision settles and probe steps for the sampled row policy.
    SettlePolicy sampled_settle{1e-8, 3, 300};
    double sampled_dp = 2e-4;
    double sampled_dphi = 1e-3;
    /// Gain is taken from the grid axis; every other control knob from here.
    ControlConfig control = [] {
        ControlConfig c;
        c.steps_per_period = 512;
        return c;
    }();
    MonodromySettings monodromy;

    void validate() const;
};

/// Chart values on the inclusive grid g_values x phase_values. values(i, j)
/// belongs to gain g_values[i] and phase phase_values[j]; flags match.
struct ChartGrid {
    Eigen::VectorXd g_values;
    Eigen::VectorXd phase_values;
    Eigen::MatrixXd values;
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> flags;

    CellFlag flag(int i, int j) const { return CellFlag(flags(i, j)); }
};

/// One phase column of the chart: the free orbit at that average phase and
/// the exact branch tangent dp/dphase there.
struct OrbitColumn {
    PeriodicOrbit orbit;
    double dp_dphase = 0.0;
    bool ok = false;
};

/// Slope of the orbit family's amplitude with respect to its average phase,
/// from the bordered shooting system (periodicity plus prescribed mean)
/// differentiated in the prescribed value. Zero at the fold.
double branch_tangent_dp(const PendulumParams& par, const PeriodicOrbit& orbit,
                         int steps = 1024);

/// Solve the orbit family across the phase axis, one column per grid value,
/// warm-starting each solve from its neighbor. Columns that fail twice (warm
/// and averaged-balance seeds) come back with ok = false.
std::vector<OrbitColumn> solve_orbit_columns(const PendulumParams& par,
                                             const ChartSettings& cs);

struct StabilityCell {
    std::complex<double> multiplier;
    CellFlag flag = CellFlag::lost;
};

StabilityCell stability_cell(const PendulumParams& par, const ChartSettings& cs,
                             double gain, const PeriodicOrbit& orbit);

/// The 2x2 continuation Jacobian at one cell, in scaled variables: row 0 is
/// the unit branch tangent, row 1 the derivative of the mean mismatch. On the
/// branch the rows are orthogonal, so with the mismatch row longer than 1 the
/// smallest singular value is 1 and the condition number equals the norm.
struct ConditionCell {
    Eigen::Matrix2d jac = Eigen::Matrix2d::Zero();
    double cond = 0.0;
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    double row2_norm = 0.0;
    CellFlag flag = CellFlag::lost;
};

ConditionCell condition_cell(const PendulumParams& par, const ChartSettings& cs,
                             double gain, const OrbitColumn& column);

/// Dominant multiplier modulus of the controlled loop over the (gain, phase)
/// grid. Overload taking columns reuses an already-solved orbit family.
ChartGrid stability_chart(const PendulumParams& par, const ChartSettings& cs);
ChartGrid stability_chart(const PendulumParams& par, const ChartSettings& cs,
                          const std::vector<OrbitColumn>& columns);

/// Condition number of the cell Jacobian over the same grid.
ChartGrid condition_chart(const PendulumParams& par, const ChartSettings& cs);
ChartGrid condition_chart(const PendulumParams& par, const ChartSettings& cs,
                          const std::vector<OrbitColumn>& columns);

/// Phase of the loss-of-stability crossing for every gain row: the highest
/// phase where the dominant modulus passes 1, by linear interpolation between
/// adjacent columns. NaN where the row never crosses (stable all the way).
Eigen::VectorXd unit_modulus_contour(const ChartGrid& stability);

/// The standard chart window: fold phase plus/minus halfwidth. Locates the
/// fold from scratch; nothing if that search fails.
std::optional<std::pair<double, double>> fold_phase_window(
    const PendulumParams& par, double halfwidth = 0.3, int steps = 1024);

}  // namespace pendcbc
