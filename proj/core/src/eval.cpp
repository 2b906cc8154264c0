#include "cac/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace cac::eval {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Continued fraction for the incomplete beta (modified Lentz).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

// Two-sided p-value for a t statistic with df degrees of freedom.
double t_two_sided_p(double t, double df) {
    const double x = df / (df + t * t);
    return incomplete_beta(df / 2.0, 0.5, x);
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("beta parameters must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

RocCurve roc(std::span<const std::pair<double, int>> scored) {
    long long pos = 0, neg = 0;
    for (const auto& [s, y] : scored) {
        if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0 or 1");
        (y == 1 ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0) {
        throw SingleClassInput("ROC needs both classes; got " + std::to_string(pos) +
                               " positives and " + std::to_string(neg) + " negatives");
    }

    std::vector<std::pair<double, int>> sorted(scored.begin(), scored.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    RocCurve curve;
    curve.points.push_back({kInf, 0.0, 1.0});
    long long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double thr = sorted[i].first;
        while (i < sorted.size() && sorted[i].first == thr) {
            (sorted[i].second == 1 ? tp : fp) += 1;
            ++i;
        }
        curve.points.push_back({thr, static_cast<double>(tp) / pos,
                                1.0 - static_cast<double>(fp) / neg});
    }
    curve.points.push_back({-kInf, 1.0, 0.0});

    double auc = 0.0;
    for (std::size_t j = 1; j < curve.points.size(); ++j) {
        const double fpr0 = 1.0 - curve.points[j - 1].specificity;
        const double fpr1 = 1.0 - curve.points[j].specificity;
        const double tpr0 = curve.points[j - 1].sensitivity;
        const double tpr1 = curve.points[j].sensitivity;
        auc += (fpr1 - fpr0) * (tpr1 + tpr0) / 2.0;
    }
    curve.auc = auc;
    return curve;
}

std::pair<double, double> spec_at_sens(const RocCurve& curve, double target_sens) {
    double best_spec = -1.0;
    double best_thr = -kInf;
    for (const auto& p : curve.points) {  // descending threshold
        if (p.sensitivity >= target_sens && p.specificity > best_spec) {
            best_spec = p.specificity;
            best_thr = p.threshold;
        }
    }
    return {best_spec, best_thr};
}

std::pair<double, double> fold_summary(std::span<const double> values) {
    if (values.size() < 2) {
        throw TooFewFolds("need at least 2 folds, got " + std::to_string(values.size()));
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::string format_mean_std(double mean, double stddev) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", mean, stddev);
    return buf;
}

std::pair<double, double> t_test(std::span<const double> values, double null_value) {
    const auto [mean, s] = fold_summary(values);
    const auto n = static_cast<double>(values.size());
    if (s == 0.0) {
        if (mean == null_value) return {0.0, 1.0};
        throw ZeroVariance("all folds identical and away from the null; t is undefined");
    }
    const double t = (mean - null_value) / (s / std::sqrt(n));
    return {t, t_two_sided_p(t, n - 1.0)};
}

std::pair<double, double> t_interval(std::span<const double> values, double level) {
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level outside (0,1)");
    const auto [mean, s] = fold_summary(values);
    const auto n = static_cast<double>(values.size());
    if (s == 0.0) return {mean, mean};
    const double alpha = 1.0 - level;
    // Invert the two-sided p by bisection; p(t) is monotone decreasing.
    double lo = 0.0, hi = 1.0;
    while (t_two_sided_p(hi, n - 1.0) > alpha) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = (lo + hi) / 2.0;
        (t_two_sided_p(mid, n - 1.0) > alpha ? lo : hi) = mid;
    }
    const double half = hi * s / std::sqrt(n);
    return {mean - half, mean + half};
}

ConfusionCounts confusion(std::span<const std::pair<double, int>> scored, double threshold) {
    ConfusionCounts c;
    for (const auto& [s, y] : scored) {
        const bool pred = s >= threshold;
        if (y == 1) {
            (pred ? c.tp : c.fn) += 1;
        } else {
            (pred ? c.fp : c.tn) += 1;
        }
    }
    return c;
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "threshold,sensitivity,specificity\n";
    char buf[128];
    for (const auto& p : curve.points) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g\n", p.threshold, p.sensitivity,
                      p.specificity);
        out << buf;
    }
}

}  // namespace cac::eval
