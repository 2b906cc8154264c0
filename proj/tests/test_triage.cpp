#include <cmath>
#include <utility>
#include <vector>

#include "cac/eval.hpp"
#include "cac/triage.hpp"
#include "doctest.h"

using namespace cac;

TEST_CASE("published operating point across prevalence levels") {
    const std::vector<double> prevalences{0.01, 0.05, 0.10, 0.30};
    const auto table = triage::lift_table(0.90, 0.31, prevalences);
    REQUIRE(table.size() == 4);
    CHECK(table[0].percent == 44);
    CHECK(table[1].percent == 43);
    CHECK(table[2].percent == 41);
    CHECK(table[3].percent == 33);
    CHECK(table[0].lift == doctest::Approx(1.4449).epsilon(5e-3));
    CHECK(table[1].lift == doctest::Approx(1.4276).epsilon(5e-3));
    CHECK(table[2].lift == doctest::Approx(1.4065).epsilon(5e-3));
    CHECK(table[3].lift == doctest::Approx(1.3280).epsilon(5e-3));
}

TEST_CASE("one percent prevalence in closed form") {
    const double lift = triage::lift({0.01, 0.90, 0.31});
    CHECK(lift == doctest::Approx(1.0 / (1.0 - (0.99 * 0.31 + 0.01 * 0.10))).epsilon(1e-12));
    CHECK(lift == doctest::Approx(1.4449).epsilon(1e-4));
}

TEST_CASE("a screen that refers everyone gains nothing") {
    CHECK(triage::lift({0.05, 1.0, 0.0}) == doctest::Approx(1.0));
    const auto table = triage::lift_table(1.0, 0.0, std::vector<double>{0.01, 0.1, 0.3});
    for (const auto& row : table) CHECK(row.percent == 0);
}

TEST_CASE("a perfect screen multiplies capacity by one over prevalence") {
    CHECK(triage::lift({0.05, 1.0, 1.0}) == doctest::Approx(20.0));
    CHECK(triage::lift({0.25, 1.0, 1.0}) == doctest::Approx(4.0));
}

TEST_CASE("sensitivity one isolates the specificity term") {
    for (const double rho : {0.02, 0.1, 0.4}) {
        for (const double sp : {0.2, 0.5, 0.8}) {
            CHECK(triage::lift({rho, 1.0, sp}) ==
                  doctest::Approx(1.0 / (1.0 - (1.0 - rho) * sp)).epsilon(1e-12));
        }
    }
}

TEST_CASE("degenerate parameters throw") {
    // Everyone screened out: nobody left to test.
    CHECK_THROWS_AS(triage::lift({0.0, 1.0, 1.0}), triage::DegenerateTriage);
    CHECK_THROWS_AS(triage::lift_table(1.0, 1.0, std::vector<double>{0.0}),
                    triage::DegenerateTriage);
}

TEST_CASE("saved tests equal the capacity freed") {
    // n(1 - 1/L) must equal TN + FN exactly.
    const double n = 10000.0;
    for (const double rho : {0.01, 0.05, 0.30}) {
        const double sn = 0.9, sp = 0.31;
        const double L = triage::lift({rho, sn, sp});
        const double tn = sp * (1.0 - rho) * n;
        const double fn = rho * n * (1.0 - sn);
        CHECK(n * (1.0 - 1.0 / L) == doctest::Approx(tn + fn).epsilon(1e-9));
    }
}

TEST_CASE("lift grows with specificity and falls with prevalence") {
    double prev_lift = 0.0;
    for (const double sp : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        const double L = triage::lift({0.05, 0.9, sp});
        CHECK(L > prev_lift);
        prev_lift = L;
    }
    prev_lift = 1e9;
    for (const double rho : {0.01, 0.05, 0.10, 0.30}) {
        const double L = triage::lift({rho, 0.9, 0.31});
        CHECK(L < prev_lift);
        prev_lift = L;
    }
}

TEST_CASE("lift never drops below one for a useful screen") {
    for (const double rho : {0.01, 0.2, 0.5}) {
        for (const double sn : {0.5, 0.9, 1.0}) {
            for (const double sp : {0.0, 0.3, 0.9}) {
                CHECK(triage::lift({rho, sn, sp}) >= 1.0 - 1e-12);
            }
        }
    }
}

TEST_CASE("sweep covers the curve and finds the operating point") {
    // Perfect classifier: positives above, negatives below.
    std::vector<std::pair<double, int>> scored;
    for (int i = 0; i < 10; ++i) scored.emplace_back(0.8 + 0.01 * i, 1);
    for (int i = 0; i < 10; ++i) scored.emplace_back(0.1 + 0.01 * i, 0);
    const auto curve = eval::roc(scored);
    const auto sweep = triage::sweep(curve, 0.05);
    REQUIRE(sweep.rows.size() == curve.points.size());
    CHECK(sweep.operating_point.sensitivity >= 0.9);
    CHECK(sweep.operating_point.specificity == doctest::Approx(1.0));
    REQUIRE(sweep.operating_point.lift.has_value());
    // Ties on specificity resolve toward the largest threshold, which here
    // is the sens 0.9 point: L = 1 / (1 - (0.95*1.0 + 0.05*0.1)).
    CHECK(*sweep.operating_point.lift == doctest::Approx(1.0 / 0.045));

    // The all-negative end of the curve (sens 0, spec 1) screens everyone
    // out; that row must be marked degenerate rather than given a lift.
    bool found_degenerate = false;
    for (const auto& row : sweep.rows) {
        if (row.sensitivity == 0.0 && row.specificity == 1.0) {
            CHECK_FALSE(row.lift.has_value());
            found_degenerate = true;
        }
    }
    CHECK(found_degenerate);
}

TEST_CASE("random classifier sweeps along the diagonal") {
    // Every score bucket holds 10 positives and 10 negatives, so the ROC is
    // the chance diagonal and at sens 0.9 we expect spec 0.1, L near 1.111.
    std::vector<std::pair<double, int>> scored;
    for (int i = 0; i < 200; ++i) scored.emplace_back((i % 10) / 10.0, (i / 10) % 2);
    const auto curve = eval::roc(scored);
    const auto sweep = triage::sweep(curve, 0.05);
    for (const auto& row : sweep.rows) {
        CHECK(row.sensitivity == doctest::Approx(1.0 - row.specificity).epsilon(1e-9));
    }
    double best = 0.0;
    for (const auto& row : sweep.rows) {
        if (row.sensitivity >= 0.9 && row.lift)
            best = std::max(best, *row.lift);
    }
    CHECK(best == doctest::Approx(1.0 / (1.0 - (0.95 * 0.1 + 0.05 * 0.1))).epsilon(1e-6));
}

TEST_CASE("lift is monotone in specificity at fixed sensitivity") {
    double prev = 0.0;
    for (const double sp : {0.0, 0.25, 0.5, 0.75, 0.99}) {
        const double L = triage::lift({0.1, 0.9, sp});
        CHECK(L >= prev);
        prev = L;
    }
}
