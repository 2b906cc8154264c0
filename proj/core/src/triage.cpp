#include "cac/triage.hpp"

#include <cmath>
#include <string>

namespace cac::triage {

double lift(const TriageParams& p) {
    if (!(p.prevalence >= 0.0 && p.prevalence <= 1.0)) {
        throw std::invalid_argument("prevalence outside [0,1]");
    }
    if (!(p.sensitivity >= 0.0 && p.sensitivity <= 1.0)) {
        throw std::invalid_argument("sensitivity outside [0,1]");
    }
    if (!(p.specificity >= 0.0 && p.specificity <= 1.0)) {
        throw std::invalid_argument("specificity outside [0,1]");
    }
    // Screened-out fraction: true negatives plus missed positives.
    const double removed =
        (1.0 - p.prevalence) * p.specificity + p.prevalence * (1.0 - p.sensitivity);
    const double denom = 1.0 - removed;
    if (denom <= 0.0) {
        throw DegenerateTriage("screen refers nobody for confirmatory testing (rho=" +
                               std::to_string(p.prevalence) + ", Sn=" +
                               std::to_string(p.sensitivity) + ", Sp=" +
                               std::to_string(p.specificity) + ")");
    }
    return 1.0 / denom;
}

std::vector<LiftRow> lift_table(double sensitivity, double specificity,
                                std::span<const double> prevalences) {
    std::vector<LiftRow> rows;
    rows.reserve(prevalences.size());
    for (double rho : prevalences) {
        LiftRow row;
        row.prevalence = rho;
        row.lift = lift({rho, sensitivity, specificity});
        row.percent = std::llround((row.lift - 1.0) * 100.0);
        rows.push_back(row);
    }
    return rows;
}

SweepResult sweep(const eval::RocCurve& curve, double prevalence) {
    SweepResult res;
    for (const auto& p : curve.points) {
        SweepRow row;
        row.threshold = p.threshold;
        row.sensitivity = p.sensitivity;
        row.specificity = p.specificity;
        try {
            row.lift = lift({prevalence, p.sensitivity, p.specificity});
        } catch (const DegenerateTriage&) {
            row.lift.reset();
        }
        res.rows.push_back(row);
    }

    const auto [spec, thr] = eval::spec_at_sens(curve, 0.90);
    for (const auto& row : res.rows) {
        if (row.threshold == thr && row.specificity == spec) {
            res.operating_point = row;
            break;
        }
    }
    return res;
}

}  // namespace cac::triage
