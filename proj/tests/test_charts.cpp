#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "pendcbc/charts.hpp"

using namespace pendcbc;

namespace {

struct WindowFixture {
    PendulumParams par;
    double phase_lo = 0.0, phase_hi = 0.0, fold_phase = 0.0;
    std::vector<OrbitColumn> columns;  // 21 columns across the fold window
    ChartSettings settings;            // matching the columns
};

const WindowFixture& fixture() {
    static const WindowFixture fix = [] {
        WindowFixture f;
        auto win = fold_phase_window(f.par);
        REQUIRE(win.has_value());
        f.phase_lo = win->first;
        f.phase_hi = win->second;
        f.fold_phase = 0.5 * (win->first + win->second);
        f.settings.phase_cells = 21;
        f.settings.phase_min = f.phase_lo;
        f.settings.phase_max = f.phase_hi;
        f.settings.g_cells = 5;
        f.settings.g_max = 0.5;
        f.settings.threads = 1;
        f.columns = solve_orbit_columns(f.par, f.settings);
        return f;
    }();
    return fix;
}

}  // namespace

TEST_CASE("orbit columns track the family with the exact amplitude slope") {
    const auto& f = fixture();
    REQUIRE(int(f.columns.size()) == 21);
    for (const auto& c : f.columns) REQUIRE(c.ok);

    // Amplitude has its minimum at the center column (the fold) and the
    // slope changes sign there.
    const auto& mid = f.columns[10];
    CHECK(std::abs(mid.orbit.mean_phase - f.fold_phase) < 1e-9);
    CHECK(std::abs(mid.dp_dphase) < 1e-5);
    CHECK(f.columns[0].dp_dphase < 0.0);
    CHECK(f.columns[20].dp_dphase > 0.0);
    for (const auto& c : f.columns) CHECK(c.orbit.p >= mid.orbit.p - 1e-9);

    // The bordered-system slope against a central difference of the family.
    for (int j : {3, 10, 16}) {
        const double fd = (f.columns[j + 1].orbit.p - f.columns[j - 1].orbit.p) /
                          (f.columns[j + 1].orbit.mean_phase -
                           f.columns[j - 1].orbit.mean_phase);
        CHECK(std::abs(f.columns[j].dp_dphase - fd) < 1e-5);
    }
}

TEST_CASE("zero gain column reproduces the free multipliers") {
    const auto& f = fixture();
    ChartGrid st = stability_chart(f.par, f.settings, f.columns);
    for (int j = 0; j < 21; ++j) {
        CHECK(st.flag(0, j) == CellFlag::ok);
        CHECK(st.values(0, j) ==
              doctest::Approx(std::abs(f.columns[j].orbit.mult_dom))
                  .epsilon(1e-6));
    }
}

TEST_CASE("stability contour emanates from the fold and slides down") {
    const auto& f = fixture();
    ChartGrid st = stability_chart(f.par, f.settings, f.columns);
    Eigen::VectorXd contour = unit_modulus_contour(st);

    CHECK(std::abs(contour[0] - f.fold_phase) < 2e-3);
    int crossings = 0;
    double prev = contour[0];
    for (int i = 1; i < f.settings.g_cells; ++i) {
        if (std::isnan(contour[i])) break;
        CHECK(contour[i] < prev);
        prev = contour[i];
        ++crossings;
    }
    // The boundary leaves the window near gain 0.6, so most of this small
    // axis still crosses it.
    CHECK(crossings >= 3);
}

TEST_CASE("a moderate gain stabilizes the whole window") {
    const auto& f = fixture();
    for (const auto& c : f.columns) {
        StabilityCell cell = stability_cell(f.par, f.settings, 2.0, c.orbit);
        REQUIRE(cell.flag == CellFlag::ok);
        CHECK(std::abs(cell.multiplier) < 1.0);
    }
}

TEST_CASE("condition rows are orthogonal on the branch") {
    const auto& f = fixture();
    ConditionCell cell = condition_cell(f.par, f.settings, 5.0, f.columns[15]);
    REQUIRE(cell.flag == CellFlag::ok);
    CHECK(cell.jac.row(0).norm() == doctest::Approx(1.0).epsilon(1e-14));
    // Exact tangent against the response row: orthogonal, so with the long
    // second row the smallest singular value is exactly 1 and the condition
    // number is the row norm.
    REQUIRE(cell.row2_norm > 1.0);
    CHECK(std::abs(cell.sigma_min - 1.0) < 1e-10);
    CHECK(cell.cond == doctest::Approx(cell.row2_norm).epsilon(1e-8));
}

TEST_CASE("condition numbers spike only against the stability boundary") {
    const auto& f = fixture();
    ChartSettings cs = f.settings;
    cs.g_cells = 9;
    cs.g_max = 2.0;
    ChartGrid st = stability_chart(f.par, cs, f.columns);
    ChartGrid cd = condition_chart(f.par, cs, f.columns);
    Eigen::VectorXd contour = unit_modulus_contour(st);

    std::vector<double> finite;
    for (int i = 0; i < cs.g_cells; ++i)
        for (int j = 0; j < cs.phase_cells; ++j)
            if (cd.flag(i, j) == CellFlag::ok) finite.push_back(cd.values(i, j));
    REQUIRE(!finite.empty());
    std::sort(finite.begin(), finite.end());
    const double median = finite[finite.size() / 2];
    const double cell_w = (cs.phase_max - cs.phase_min) / (cs.phase_cells - 1);

    for (int i = 0; i < cs.g_cells; ++i)
        for (int j = 0; j < cs.phase_cells; ++j) {
            if (cd.flag(i, j) != CellFlag::ok) continue;
            if (cd.values(i, j) <= 10.0 * median) continue;
            REQUIRE(!std::isnan(contour[i]));
            CHECK(std::abs(cd.phase_values[j] - contour[i]) <=
                  2.0 * cell_w + 1e-12);
        }
}

TEST_CASE("sampled mismatch row agrees with the linearized one") {
    const auto& f = fixture();
    ConditionCell lin = condition_cell(f.par, f.settings, 5.0, f.columns[15]);
    ChartSettings cs = f.settings;
    cs.row2 = Row2Policy::sampled;
    ConditionCell smp = condition_cell(f.par, cs, 5.0, f.columns[15]);
    REQUIRE(lin.flag == CellFlag::ok);
    REQUIRE(smp.flag == CellFlag::ok);
    CHECK(smp.jac(1, 0) == doctest::Approx(lin.jac(1, 0)).epsilon(1e-2));
    CHECK(smp.jac(1, 1) == doctest::Approx(lin.jac(1, 1)).epsilon(1e-2));
    CHECK(smp.cond == doctest::Approx(lin.cond).epsilon(1e-2));
}

TEST_CASE("grids are identical for one worker and four") {
    const auto& f = fixture();
    ChartSettings cs = f.settings;
    ChartGrid one = stability_chart(f.par, cs, f.columns);
    cs.threads = 4;
    ChartGrid four = stability_chart(f.par, cs, f.columns);
    REQUIRE(one.values.rows() == four.values.rows());
    CHECK((one.values - four.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK((one.flags.array() == four.flags.array()).all());
}

TEST_CASE("inconsistent chart settings are rejected") {
    const auto& f = fixture();
    ChartSettings cs = f.settings;
    cs.phase_max = cs.phase_min;
    CHECK_THROWS_AS(cs.validate(), std::invalid_argument);
    ChartSettings cs2 = f.settings;
    cs2.orbit_steps = 1000;
    CHECK_THROWS_AS(cs2.validate(), std::invalid_argument);
}
