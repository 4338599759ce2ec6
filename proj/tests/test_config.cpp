#include <cstdlib>
#include <string>

#include "doctest.h"
#include "pendcbc/config.hpp"

using namespace pendcbc;

namespace {

bool mentions(const std::exception& e, const std::string& needle) {
    return std::string(e.what()).find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("empty input resolves to the defaults") {
    const RunConfig rc = parse_config_text("", "inline");
    const RunConfig def = default_config();
    CHECK(serialize_config(rc) == serialize_config(def));
    CHECK(rc.model.length == 0.2);
    CHECK(rc.control.gain == 5.0);
    CHECK(rc.charts.orbit_steps == 2 * rc.control.steps_per_period);
    CHECK(rc.charts.monodromy.steps_per_period ==
          rc.control.steps_per_period);
    // Auto target: unset target_mean leaves the loop aiming at zero until a
    // subcommand supplies its natural target.
    CHECK(rc.control.target_mean() == 0.0);
}

TEST_CASE("values land in the right fields and comments are skipped") {
    const RunConfig rc = parse_config_text(
        "# a comment\n"
        "\n"
        "control.gain = 7.5\n"
        "charts.row2 = sampled\n"
        "continuation.max_points = 12\n"
        "simulate.start = orbit\n"
        "output_dir = results/run3\n"
        "seed = 1234567890123\n",
        "inline");
    CHECK(rc.control.gain == 7.5);
    CHECK(rc.charts.row2 == Row2Policy::sampled);
    CHECK(rc.continuation.max_points == 12);
    CHECK(rc.simulate.start == "orbit");
    CHECK(rc.output_dir == "results/run3");
    CHECK(rc.seed == 1234567890123ull);
    // Derived copies follow the primary sections.
    CHECK(rc.charts.control.gain == 7.5);
}

TEST_CASE("constraint violations name the key, the rule and the line") {
    try {
        parse_config_text("control.gain = 1\ncontrol.relaxation = 1.5\n",
                          "bad.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(mentions(e, "bad.cfg:2"));
        CHECK(mentions(e, "control.relaxation"));
        CHECK(mentions(e, "(0, 1]"));
        CHECK(mentions(e, "1.5"));
    }
}

TEST_CASE("unknown keys and malformed lines are rejected with provenance") {
    CHECK_THROWS_WITH_AS(parse_config_text("control.gians = 1\n", "f.cfg"),
                         doctest::Contains("f.cfg:1"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("control.gians = 1\n", "f.cfg"),
                         doctest::Contains("unknown configuration key"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("just some words\n", "f.cfg"),
                         doctest::Contains("expected `key = value`"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(
        parse_config_text("model.mass = heavy\n", "f.cfg"),
        doctest::Contains("expects a number"), ConfigError);
    CHECK_THROWS_WITH_AS(
        parse_config_text("continuation.max_points = 2.5\n", "f.cfg"),
        doctest::Contains("expects an integer"), ConfigError);
}

TEST_CASE("cross-key checks fire after all lines are read") {
    CHECK_THROWS_WITH_AS(
        parse_config_text("charts.g_min = 9\ncharts.g_max = 3\n", "f.cfg"),
        doctest::Contains("g_min < g_max"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("charts.mesh = 63\n", "f.cfg"),
                         doctest::Contains("even"), ConfigError);
    CHECK_THROWS_WITH_AS(
        parse_config_text("continuation.h0 = 0.1\n", "f.cfg"),
        doctest::Contains("h_min"), ConfigError);
}

TEST_CASE("serialization round-trips exactly") {
    RunConfig rc = parse_config_text(
        "model.omega = 17.5\n"
        "control.target_mean = -2.9\n"
        "continuation.newton_tol = 0.004\n"
        "charts.g_max = 9.25\n",
        "inline");
    const std::string text = serialize_config(rc);
    const RunConfig back = parse_config_text(text, "roundtrip");
    CHECK(serialize_config(back) == text);
    CHECK(config_hash(back) == config_hash(rc));
    CHECK(back.model.omega == 17.5);
    CHECK(back.control.target_mean() == -2.9);
    // An unset target serializes as nan and survives the trip too.
    const RunConfig def = default_config();
    const RunConfig def2 =
        parse_config_text(serialize_config(def), "roundtrip");
    CHECK(serialize_config(def2) == serialize_config(def));
}

TEST_CASE("changing any value changes the hash") {
    const RunConfig a = default_config();
    const RunConfig b = parse_config_text("control.gain = 5.0000001\n", "x");
    CHECK(config_hash(a) != config_hash(b));
    CHECK(config_hash(a) == config_hash(default_config()));
}

TEST_CASE("environment overrides beat the file and report their origin") {
    ::setenv("PENDCBC_CONTROL_GAIN", "2.25", 1);
    const RunConfig rc = parse_config_text("control.gain = 9\n", "inline");
    CHECK(rc.control.gain == 2.25);

    ::setenv("PENDCBC_CONTROL_GAIN", "-1", 1);
    try {
        parse_config_text("", "inline");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(mentions(e, "PENDCBC_CONTROL_GAIN"));
    }
    ::unsetenv("PENDCBC_CONTROL_GAIN");
}

TEST_CASE("the period is always derived from the drive frequency") {
    const RunConfig rc = parse_config_text("model.omega = 12.0\n", "inline");
    CHECK(rc.model.period == doctest::Approx(2.0 * 3.14159265358979323846 / 12.0)
                                 .epsilon(1e-15));
}
