// Metrics: ROC curve with tie-aware trapezoidal AUC, specificity at a
// sensitivity target, fold summaries, and a one-sample t-test with the
// Student-t CDF evaluated from scratch.
#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cac::eval {

struct SingleClassInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TooFewFolds : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ZeroVariance : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RocPoint {
    double threshold = 0.0;  // predict positive when score >= threshold
    double sensitivity = 0.0;
    double specificity = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // descending threshold; +inf and -inf endpoints
    double auc = 0.0;
};

struct ConfusionCounts {
    long long tp = 0, tn = 0, fp = 0, fn = 0;
};

// scored: (probability, label in {0,1}). Thresholds are the distinct scores
// plus the two endpoints; the trapezoidal AUC equals the Mann-Whitney
// statistic P(s+ > s-) + 0.5 P(s+ = s-) including ties.
RocCurve roc(std::span<const std::pair<double, int>> scored);

// Max specificity among points with sensitivity >= target; ties broken
// toward the largest threshold. Returns (specificity, threshold).
std::pair<double, double> spec_at_sens(const RocCurve& curve, double target_sens = 0.90);

// (mean, sample std with n-1 denominator); needs >= 2 values.
std::pair<double, double> fold_summary(std::span<const double> values);

std::string format_mean_std(double mean, double stddev);  // "0.68 ± 0.07"

// Two-sided one-sample t-test. All values equal to the null give (0, 1);
// zero variance elsewhere throws ZeroVariance.
std::pair<double, double> t_test(std::span<const double> values, double null_value = 0.5);

// Two-sided t confidence interval for the mean: (lo, hi).
std::pair<double, double> t_interval(std::span<const double> values, double level = 0.95);

ConfusionCounts confusion(std::span<const std::pair<double, int>> scored, double threshold);

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);

// Regularized incomplete beta I_x(a, b) by continued fraction; exposed so
// the t CDF machinery can be checked against tabulated values.
double incomplete_beta(double a, double b, double x);

}  // namespace cac::eval
