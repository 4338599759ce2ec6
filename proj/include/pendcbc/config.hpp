#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "pendcbc/charts.hpp"
#include "pendcbc/closed_loop.hpp"
#include "pendcbc/continuation.hpp"
#include "pendcbc/params.hpp"

namespace pendcbc {

/// Raised on any configuration problem. The message starts with the source
/// location (file:line, or the environment variable name) when one exists.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimulateConfig {
    std::string start = "cold";  // cold: plain state; orbit: seeded on a rotation
    double amplitude = 0.02;     // m, excitation amplitude for the run
    double phi0 = -2.1;          // rad, initial angle (cold start)
    double phi_dot0 = 0.0;       // rad/s
    double orbit_phase = -2.9;   // rad, orbit family phase for an orbit start
    int periods = 50;
};

/// Everything a run needs, defaults included. Parsed from line-oriented
/// `key = value` text with dotted keys; any key can also be overridden by an
/// environment variable PENDCBC_<KEY> with dots replaced by underscores.
/// Derived fields (model.period, the chart scaling and step sync below) are
/// recomputed after parsing, so only the independent knobs are keys.
struct RunConfig {
    PendulumParams model;
    ControlConfig control;
    /// Requested projection target mean; NaN means the subcommand picks the
    /// natural one (an orbit's own mean, or the initial angle).
    double target_mean = std::numeric_limits<double>::quiet_NaN();
    ContinuationSettings continuation;
    double p_start = 0.02;     // m, where the experiment branch starts
    double phi0_guess = -2.1;  // rad, first guess of the settled mean there
    /// Charts inherit control, scaling, and integration steps from the
    /// sections above; an equal phase_min/phase_max means "center the window
    /// on the fold with charts.halfwidth".
    ChartSettings charts;
    double chart_halfwidth = 0.3;
    std::string chart_format = "wide";  // wide matrix or long rows
    SimulateConfig simulate;
    std::string output_dir = "out";
    std::uint64_t seed = 0;

    RunConfig() { control.gain = 5.0; }
};

/// Defaults passed through the same derivation pass as parsed files.
RunConfig default_config();

/// Parse a file. Errors carry file:line.
RunConfig parse_config(const std::string& path);

/// Parse from memory; `origin` names the source in error messages.
RunConfig parse_config_text(const std::string& text, const std::string& origin);

/// Canonical text: every key in fixed order, doubles at full precision.
/// parse_config_text(serialize_config(c)) reproduces c field for field.
std::string serialize_config(const RunConfig& rc);

/// FNV-1a 64-bit hash of the canonical text; artifacts echo it.
std::uint64_t config_hash(const RunConfig& rc);

/// Write the canonical text, creating parent directories.
void write_resolved_config(const RunConfig& rc, const std::string& path);

/// All key names in canonical order.
std::vector<std::string> config_keys();

}  // namespace pendcbc
