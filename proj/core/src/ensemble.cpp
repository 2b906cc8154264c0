#include "cac/ensemble.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace cac::ensemble {

void PredictionMatrix::validate() const {
    const auto rows = ids.size();
    if (labels.size() != rows || values.size() != rows * m()) {
        throw std::invalid_argument("prediction matrix fields are misaligned");
    }
    if (!provenance.empty() && provenance.size() != rows) {
        throw std::invalid_argument("provenance must cover every row");
    }
    std::set<std::string> unique(ids.begin(), ids.end());
    if (unique.size() != rows) throw std::invalid_argument("duplicate ids in matrix");
}

std::vector<double> rank_ensemble(const PredictionMatrix& matrix) {
    matrix.validate();
    if (matrix.m() < 2) {
        throw SingleModel("rank ensembling needs at least 2 models, got " +
                          std::to_string(matrix.m()));
    }
    const auto n = matrix.n();
    std::vector<double> out(n, 0.0);
    std::vector<std::size_t> order(n);
    std::vector<double> rank(n);
    for (std::size_t col = 0; col < matrix.m(); ++col) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return matrix.at(a, col) < matrix.at(b, col);
        });
        // Average rank within each tie group, 1-based.
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && matrix.at(order[j + 1], col) == matrix.at(order[i], col)) ++j;
            const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t p = i; p <= j; ++p) rank[order[p]] = mean_rank;
            i = j + 1;
        }
        const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
        for (std::size_t r = 0; r < n; ++r) {
            out[r] += (rank[r] - 1.0) / denom / static_cast<double>(matrix.m());
        }
    }
    return out;
}

StackResult stack(const PredictionMatrix& matrix, const linear::LinearTrainConfig& cfg,
                  std::span<const std::unordered_set<std::string>> fold_train_sets) {
    matrix.validate();
    const auto n = matrix.n();
    const auto m = matrix.m();
    if (n == 0) throw std::invalid_argument("empty prediction matrix");

    if (!matrix.provenance.empty() && !fold_train_sets.empty()) {
        for (std::size_t r = 0; r < n; ++r) {
            const int f = matrix.provenance[r];
            if (f < 0) continue;
            if (static_cast<std::size_t>(f) >= fold_train_sets.size()) {
                throw std::invalid_argument("provenance fold out of range");
            }
            if (fold_train_sets[static_cast<std::size_t>(f)].count(matrix.ids[r])) {
                throw LeakageDetected("individual " + matrix.ids[r] +
                                      " was scored by fold " + std::to_string(f) +
                                      ", which trained on it");
            }
        }
    }

    StackResult res;
    res.model = linear::train_logistic(matrix.values, static_cast<int>(m), matrix.labels, cfg);

    std::vector<int> groups;
    if (!matrix.provenance.empty()) {
        groups = matrix.provenance;
        std::sort(groups.begin(), groups.end());
        groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
    }

    res.oof_scores.assign(n, 0.0);
    if (groups.size() < 2) {
        // No fold structure: the full fit is all there is.
        for (std::size_t r = 0; r < n; ++r) {
            res.oof_scores[r] =
                res.model.predict({matrix.values.data() + r * m, m});
        }
        return res;
    }

    for (int g : groups) {
        std::vector<double> feats;
        std::vector<int> labels;
        for (std::size_t r = 0; r < n; ++r) {
            if (matrix.provenance[r] == g) continue;
            feats.insert(feats.end(), matrix.values.begin() + static_cast<std::ptrdiff_t>(r * m),
                         matrix.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * m));
            labels.push_back(matrix.labels[r]);
        }
        const auto fold_model =
            linear::train_logistic(feats, static_cast<int>(m), labels, cfg);
        for (std::size_t r = 0; r < n; ++r) {
            if (matrix.provenance[r] != g) continue;
            res.oof_scores[r] =
                fold_model.predict({matrix.values.data() + r * m, m});
        }
    }
    return res;
}

}  // namespace cac::ensemble
