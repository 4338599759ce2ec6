#include "pendcbc/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

namespace pendcbc {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool scan_double(const std::string& s, double* out) {
    const char* c = s.c_str();
    char* end = nullptr;
    double v = std::strtod(c, &end);
    if (end == c || *end != '\0') return false;
    *out = v;
    return true;
}

bool scan_long(const std::string& s, long* out) {
    const char* c = s.c_str();
    char* end = nullptr;
    long v = std::strtol(c, &end, 10);
    if (end == c || *end != '\0') return false;
    *out = v;
    return true;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

/// One configurable key: how to read it into the config and print it back.
/// The setter returns an empty string on success, else the complaint (without
/// the source location, which the caller prepends).
struct KeyEntry {
    std::string name;
    std::function<std::string(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

struct Bound {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool lo_strict = false, hi_strict = false;
    const char* phrase = nullptr;  // human wording of the constraint
    bool allow_nan = false;

    std::string complaint(const std::string& key, const std::string& got) const {
        std::string what = phrase ? phrase : "is out of range";
        return key + " " + what + " (got " + got + ")";
    }
    bool admits(double v) const {
        if (std::isnan(v)) return allow_nan;
        if (lo_strict ? !(v > lo) : !(v >= lo)) return false;
        if (hi_strict ? !(v < hi) : !(v <= hi)) return false;
        return true;
    }
};

Bound positive() { return {0.0, std::numeric_limits<double>::infinity(), true, false, "must be positive", false}; }
Bound non_negative() { return {0.0, std::numeric_limits<double>::infinity(), false, false, "must not be negative", false}; }
Bound any_value() { return {}; }

void add_double(std::vector<KeyEntry>& tab, std::string name,
                std::function<double*(RunConfig&)> acc, Bound b) {
    KeyEntry e;
    e.name = name;
    e.set = [name, acc, b](RunConfig& rc, const std::string& raw) {
        double v = 0.0;
        if (!scan_double(raw, &v))
            return name + " expects a number, got '" + raw + "'";
        if (!b.admits(v)) return b.complaint(name, raw);
        *acc(rc) = v;
        return std::string();
    };
    e.get = [acc](const RunConfig& rc) {
        return fmt_double(*acc(const_cast<RunConfig&>(rc)));
    };
    tab.push_back(std::move(e));
}

void add_int(std::vector<KeyEntry>& tab, std::string name,
             std::function<int*(RunConfig&)> acc, long lo, long hi) {
    KeyEntry e;
    e.name = name;
    e.set = [name, acc, lo, hi](RunConfig& rc, const std::string& raw) {
        long v = 0;
        if (!scan_long(raw, &v))
            return name + " expects an integer, got '" + raw + "'";
        if (v < lo || v > hi)
            return name + " must lie in [" + std::to_string(lo) + ", " +
                   std::to_string(hi) + "] (got " + raw + ")";
        *acc(rc) = int(v);
        return std::string();
    };
    e.get = [acc](const RunConfig& rc) {
        return std::to_string(*acc(const_cast<RunConfig&>(rc)));
    };
    tab.push_back(std::move(e));
}

void add_choice(std::vector<KeyEntry>& tab, std::string name,
                std::function<std::string*(RunConfig&)> acc,
                std::vector<std::string> allowed) {
    KeyEntry e;
    e.name = name;
    e.set = [name, acc, allowed](RunConfig& rc, const std::string& raw) {
        for (const auto& a : allowed)
            if (raw == a) {
                *acc(rc) = raw;
                return std::string();
            }
        std::string opts;
        for (const auto& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
        return name + " must be one of {" + opts + "} (got '" + raw + "')";
    };
    e.get = [acc](const RunConfig& rc) {
        return *acc(const_cast<RunConfig&>(rc));
    };
    tab.push_back(std::move(e));
}

const std::vector<KeyEntry>& key_table() {
    static const std::vector<KeyEntry> table = [] {
        std::vector<KeyEntry> t;
        auto D = [&](const char* n, std::function<double*(RunConfig&)> a,
                     Bound b) { add_double(t, n, std::move(a), b); };
        auto I = [&](const char* n, std::function<int*(RunConfig&)> a, long lo,
                     long hi) { add_int(t, n, std::move(a), lo, hi); };

        D("model.mass", [](RunConfig& c) { return &c.model.mass; }, positive());
        D("model.length", [](RunConfig& c) { return &c.model.length; },
          positive());
        D("model.damping", [](RunConfig& c) { return &c.model.damping; },
          non_negative());
        D("model.gravity", [](RunConfig& c) { return &c.model.gravity; },
          positive());
        D("model.omega", [](RunConfig& c) { return &c.model.omega; },
          positive());

        D("control.gain", [](RunConfig& c) { return &c.control.gain; },
          non_negative());
        D("control.deriv_ratio",
          [](RunConfig& c) { return &c.control.deriv_ratio; }, non_negative());
        D("control.relaxation",
          [](RunConfig& c) { return &c.control.relaxation; },
          Bound{0.0, 1.0, true, false, "must lie in (0, 1]", false});
        I("control.projection_order",
          [](RunConfig& c) { return &c.control.projection_order; }, 0, 64);
        {
            Bound b = any_value();
            b.allow_nan = true;
            D("control.target_mean",
              [](RunConfig& c) { return &c.target_mean; }, b);
        }
        I("control.steps_per_period",
          [](RunConfig& c) { return &c.control.steps_per_period; }, 8, 8192);
        I("control.warmup_periods",
          [](RunConfig& c) { return &c.control.warmup_periods; }, 1, 1000);
        D("control.velocity_limit",
          [](RunConfig& c) { return &c.control.velocity_limit; }, positive());

        D("continuation.sigma_p",
          [](RunConfig& c) { return &c.continuation.sigma_p; }, positive());
        D("continuation.sigma_phi",
          [](RunConfig& c) { return &c.continuation.sigma_phi; }, positive());
        D("continuation.newton_tol",
          [](RunConfig& c) { return &c.continuation.newton_tol; }, positive());
        D("continuation.polish_divisor",
          [](RunConfig& c) { return &c.continuation.polish_divisor; },
          positive());
        I("continuation.max_newton_iter",
          [](RunConfig& c) { return &c.continuation.max_newton_iter; }, 1, 100);
        D("continuation.fd_dp",
          [](RunConfig& c) { return &c.continuation.fd_dp; }, positive());
        D("continuation.fd_dphi",
          [](RunConfig& c) { return &c.continuation.fd_dphi; }, positive());
        D("continuation.h0", [](RunConfig& c) { return &c.continuation.h0; },
          positive());
        D("continuation.h_min",
          [](RunConfig& c) { return &c.continuation.h_min; }, positive());
        D("continuation.h_max",
          [](RunConfig& c) { return &c.continuation.h_max; }, positive());
        I("continuation.max_points",
          [](RunConfig& c) { return &c.continuation.max_points; }, 1, 100000);
        D("continuation.p_min",
          [](RunConfig& c) { return &c.continuation.p_min; }, non_negative());
        D("continuation.p_max",
          [](RunConfig& c) { return &c.continuation.p_max; }, positive());
        D("continuation.phi_min",
          [](RunConfig& c) { return &c.continuation.phi_min; }, any_value());
        D("continuation.phi_max",
          [](RunConfig& c) { return &c.continuation.phi_max; }, any_value());
        I("continuation.max_consecutive_losses",
          [](RunConfig& c) { return &c.continuation.max_consecutive_losses; },
          1, 100);
        D("continuation.settle.mean_tol",
          [](RunConfig& c) { return &c.continuation.settle.mean_tol; },
          positive());
        I("continuation.settle.consecutive",
          [](RunConfig& c) { return &c.continuation.settle.consecutive; }, 1,
          50);
        I("continuation.settle.max_periods",
          [](RunConfig& c) { return &c.continuation.settle.max_periods; }, 1,
          100000);
        D("continuation.p_start", [](RunConfig& c) { return &c.p_start; },
          positive());
        D("continuation.phi0_guess",
          [](RunConfig& c) { return &c.phi0_guess; }, any_value());

        I("charts.g_cells", [](RunConfig& c) { return &c.charts.g_cells; }, 1,
          2000);
        I("charts.phase_cells",
          [](RunConfig& c) { return &c.charts.phase_cells; }, 1, 2000);
        D("charts.g_min", [](RunConfig& c) { return &c.charts.g_min; },
          non_negative());
        D("charts.g_max", [](RunConfig& c) { return &c.charts.g_max; },
          positive());
        D("charts.phase_min", [](RunConfig& c) { return &c.charts.phase_min; },
          any_value());
        D("charts.phase_max", [](RunConfig& c) { return &c.charts.phase_max; },
          any_value());
        D("charts.halfwidth", [](RunConfig& c) { return &c.chart_halfwidth; },
          positive());
        I("charts.mesh",
          [](RunConfig& c) { return &c.charts.monodromy.mesh; }, 4, 1024);
        I("charts.threads", [](RunConfig& c) { return &c.charts.threads; }, 0,
          4096);
        {
            KeyEntry e;
            e.name = "charts.row2";
            e.set = [](RunConfig& rc, const std::string& raw) {
                if (raw == "linearized")
                    rc.charts.row2 = Row2Policy::linearized;
                else if (raw == "sampled")
                    rc.charts.row2 = Row2Policy::sampled;
                else
                    return std::string(
                               "charts.row2 must be one of {linearized, "
                               "sampled} (got '") +
                           raw + "')";
                return std::string();
            };
            e.get = [](const RunConfig& rc) {
                return std::string(rc.charts.row2 == Row2Policy::linearized
                                       ? "linearized"
                                       : "sampled");
            };
            t.push_back(std::move(e));
        }
        add_choice(t, "charts.format",
                   [](RunConfig& c) { return &c.chart_format; },
                   {"wide", "long"});

        add_choice(t, "simulate.start",
                   [](RunConfig& c) { return &c.simulate.start; },
                   {"cold", "orbit"});
        D("simulate.amplitude",
          [](RunConfig& c) { return &c.simulate.amplitude; }, positive());
        D("simulate.phi0", [](RunConfig& c) { return &c.simulate.phi0; },
          any_value());
        D("simulate.phi_dot0",
          [](RunConfig& c) { return &c.simulate.phi_dot0; }, any_value());
        D("simulate.orbit_phase",
          [](RunConfig& c) { return &c.simulate.orbit_phase; }, any_value());
        I("simulate.periods", [](RunConfig& c) { return &c.simulate.periods; },
          1, 100000);

        {
            KeyEntry e;
            e.name = "output_dir";
            e.set = [](RunConfig& rc, const std::string& raw) {
                if (raw.empty())
                    return std::string("output_dir must not be empty");
                rc.output_dir = raw;
                return std::string();
            };
            e.get = [](const RunConfig& rc) { return rc.output_dir; };
            t.push_back(std::move(e));
        }
        {
            KeyEntry e;
            e.name = "seed";
            e.set = [](RunConfig& rc, const std::string& raw) {
                const char* c = raw.c_str();
                char* end = nullptr;
                unsigned long long v = std::strtoull(c, &end, 10);
                if (end == c || *end != '\0' || raw[0] == '-')
                    return std::string("seed expects an unsigned integer, got '") +
                           raw + "'";
                rc.seed = v;
                return std::string();
            };
            e.get = [](const RunConfig& rc) { return std::to_string(rc.seed); };
            t.push_back(std::move(e));
        }
        return t;
    }();
    return table;
}

const KeyEntry* find_key(const std::string& name) {
    for (const auto& e : key_table())
        if (e.name == name) return &e;
    return nullptr;
}

std::string env_name(const std::string& key) {
    std::string n = "PENDCBC_";
    for (char c : key)
        n += c == '.' ? '_' : char(std::toupper(static_cast<unsigned char>(c)));
    return n;
}

/// Derived fields and cross-key checks. `where` locates offending keys in
/// the parsed source for the error message, when they appeared there.
void finalize(RunConfig& rc, const std::map<std::string, std::string>& where) {
    auto locate = [&](const char* key) {
        auto it = where.find(key);
        return it == where.end() ? std::string(key) + " (default)"
                                 : std::string(key) + " at " + it->second;
    };
    auto fail = [&](const char* key, const std::string& msg) {
        throw ConfigError(msg + " [" + locate(key) + "]");
    };

    rc.model.period = 2.0 * std::numbers::pi / rc.model.omega;
    rc.model.validate();

    if (!std::isnan(rc.target_mean))
        rc.control.set_target_mean(rc.target_mean);
    else
        rc.control.set_target_mean(0.0);

    if (rc.continuation.h_min > rc.continuation.h0)
        fail("continuation.h0", "continuation.h0 must be at least h_min");
    if (rc.continuation.h0 > rc.continuation.h_max)
        fail("continuation.h0", "continuation.h0 must be at most h_max");
    if (!(rc.continuation.p_min < rc.continuation.p_max))
        fail("continuation.p_min",
             "continuation window needs p_min < p_max");
    if (!(rc.continuation.phi_min < rc.continuation.phi_max))
        fail("continuation.phi_min",
             "continuation window needs phi_min < phi_max");
    if (rc.charts.g_cells > 1 ? !(rc.charts.g_min < rc.charts.g_max)
                              : !(rc.charts.g_min <= rc.charts.g_max))
        fail("charts.g_min", "chart gain axis needs g_min < g_max");
    if (rc.charts.phase_min > rc.charts.phase_max)
        fail("charts.phase_min",
             "chart phase axis needs phase_min <= phase_max (equal means "
             "auto-center on the fold)");
    if (rc.charts.monodromy.mesh % 2 != 0)
        fail("charts.mesh", "charts.mesh must be even");

    // Charts share the plant-facing settings with the sections above; keep
    // the derived copies in step with one source of truth.
    rc.charts.control = rc.control;
    rc.charts.orbit_steps = 2 * rc.control.steps_per_period;
    rc.charts.monodromy.steps_per_period = rc.control.steps_per_period;
    rc.charts.sigma_p = rc.continuation.sigma_p;
    rc.charts.sigma_phi = rc.continuation.sigma_phi;
}

}  // namespace

RunConfig default_config() {
    RunConfig rc;
    finalize(rc, {});
    return rc;
}

RunConfig parse_config_text(const std::string& text,
                            const std::string& origin) {
    RunConfig rc;
    std::map<std::string, std::string> where;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string at = origin + ":" + std::to_string(lineno);
        const std::string body = trim(line);
        if (body.empty() || body[0] == '#') continue;
        const size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError(at + ": expected `key = value`, got '" + body +
                              "'");
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        const KeyEntry* entry = find_key(key);
        if (!entry)
            throw ConfigError(at + ": unknown configuration key '" + key + "'");
        const std::string err = entry->set(rc, value);
        if (!err.empty()) throw ConfigError(at + ": " + err);
        where[key] = at;
    }

    for (const auto& e : key_table()) {
        const std::string en = env_name(e.name);
        if (const char* raw = std::getenv(en.c_str())) {
            const std::string err = e.set(rc, raw);
            if (!err.empty())
                throw ConfigError("environment variable " + en + ": " + err);
            where[e.name] = "environment variable " + en;
        }
    }

    finalize(rc, where);
    return rc;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError(path + ": cannot open configuration file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::string serialize_config(const RunConfig& rc) {
    std::string out =
        "# resolved configuration: every key, defaults applied\n";
    for (const auto& e : key_table())
        out += e.name + " = " + e.get(rc) + "\n";
    return out;
}

std::uint64_t config_hash(const RunConfig& rc) {
    const std::string text = serialize_config(rc);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void write_resolved_config(const RunConfig& rc, const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw ConfigError(path + ": cannot write resolved configuration");
    out << serialize_config(rc);
}

std::vector<std::string> config_keys() {
    std::vector<std::string> names;
    for (const auto& e : key_table()) names.push_back(e.name);
    return names;
}

}  // namespace pendcbc
