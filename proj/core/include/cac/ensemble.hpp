// Combining per-individual predictions from several base models: rank
// averaging and a stacked logistic meta-learner fit out-of-fold.
#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "cac/linear.hpp"

namespace cac::ensemble {

struct SingleModel : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LeakageDetected : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PredictionMatrix {
    std::vector<std::string> ids;          // n individuals
    std::vector<int> labels;               // n, 0/1
    std::vector<std::string> model_names;  // m base models
    std::vector<double> values;            // n x m, row-major
    // Fold whose models produced each row's scores (-1 when unknown). Drives
    // both the leakage check and the out-of-fold stacking protocol.
    std::vector<int> provenance;

    std::size_t n() const { return ids.size(); }
    std::size_t m() const { return model_names.size(); }
    double at(std::size_t row, std::size_t col) const { return values[row * m() + col]; }
    void validate() const;
};

// Replaces each column by average ranks (ties get the mean rank), normalizes
// to [0,1], and returns the row means. Needs >= 2 models.
std::vector<double> rank_ensemble(const PredictionMatrix& matrix);

struct StackResult {
    linear::LogisticModel model;     // fit on every row, for deployment
    std::vector<double> oof_scores;  // per row, from a stacker that never saw it
};

// fold_train_sets[f] = ids trained on by fold f's base models; rows whose
// provenance fold trained on their own individual are a hard error.
StackResult stack(const PredictionMatrix& matrix,
                  const linear::LinearTrainConfig& cfg = {},
                  std::span<const std::unordered_set<std::string>> fold_train_sets = {});

}  // namespace cac::ensemble
