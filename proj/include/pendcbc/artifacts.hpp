#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "pendcbc/charts.hpp"
#include "pendcbc/closed_loop.hpp"

namespace pendcbc {

/// Shortest exact text form of a double. All artifact numbers go through
/// this so reruns with the same config produce byte-identical files.
std::string format_number(double v);

/// `#`-prefixed header block at the top of every CSV artifact: the producing
/// subcommand, the configuration hash, and any extra note lines.
struct ArtifactMeta {
    std::string tool;
    std::string config_hash;
    std::vector<std::pair<std::string, std::string>> notes;
};

struct BranchRow {
    long index = 0;
    double p = 0.0;
    double phi0 = 0.0;
    double p_tan = 0.0;
    double phi0_tan = 0.0;
    double residual = 0.0;
    long periods_used = 0;
    double u_sup = 0.0;
    std::string flag;  // stable-guess | fold | unstable-guess | lost
};

void write_trajectory_csv(const std::string& path, const ArtifactMeta& meta,
                          const std::vector<TrajectoryRow>& rows);

void write_branch_csv(const std::string& path, const ArtifactMeta& meta,
                      const std::vector<BranchRow>& rows);

/// Reads back a branch CSV written by write_branch_csv, skipping the header
/// block. Throws std::runtime_error on missing files or malformed rows.
std::vector<BranchRow> read_branch_csv(const std::string& path);

void write_orbit_csv(const std::string& path, const ArtifactMeta& meta,
                     const Eigen::VectorXd& t, const Eigen::VectorXd& phi,
                     const Eigen::VectorXd& phi_dot);

/// Scalar summary sidecar for an exported orbit.
void write_orbit_json(const std::string& path, double p, double avg_phase,
                      const std::vector<std::complex<double>>& multipliers);

/// format "wide": matrix layout, header row carries the phase axis, first
/// column the gain axis, one value per cell (lost cells print nan, singular
/// ones inf). format "long": one `g,phase,value,flag` row per cell.
void write_chart_csv(const std::string& path, const ArtifactMeta& meta,
                     const ChartGrid& grid, const std::string& format);

void write_chart_axes_json(const std::string& path, const ChartGrid& grid);

}  // namespace pendcbc
