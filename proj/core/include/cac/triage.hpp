// Testing-capacity economics: when model-negative individuals skip the
// confirmatory test, throughput rises by L = 1 / (1 - ((1-rho)*Sp + rho*(1-Sn)))
// where rho is prevalence, Sn sensitivity, Sp specificity. Equivalently
// L = n / (n - (TN + FN)) with TN = Sp*(1-rho)*n and FN = rho*n*(1-Sn).
#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cac/eval.hpp"

namespace cac::triage {

struct DegenerateTriage : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TriageParams {
    double prevalence = 0.0;   // rho in [0,1]
    double sensitivity = 0.0;  // Sn in [0,1]
    double specificity = 0.0;  // Sp in [0,1]
};

// Capacity lift L >= 1. Throws DegenerateTriage when the screen refers
// nobody for testing (denominator <= 0).
double lift(const TriageParams& params);

struct LiftRow {
    double prevalence = 0.0;
    double lift = 0.0;
    long long percent = 0;  // round((L - 1) * 100)
};

std::vector<LiftRow> lift_table(double sensitivity, double specificity,
                                std::span<const double> prevalences);

struct SweepRow {
    double threshold = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    std::optional<double> lift;  // empty where the point is degenerate
};

struct SweepResult {
    std::vector<SweepRow> rows;   // one per ROC point
    SweepRow operating_point;     // best specificity at sensitivity >= 0.9
};

SweepResult sweep(const eval::RocCurve& curve, double prevalence);

}  // namespace cac::triage
