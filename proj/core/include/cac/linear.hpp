// Logistic classifier over standardized feature vectors, fit by full-batch
// gradient descent with an L2 penalty. Serves as the shallow baseline over
// hand-crafted features and as the stacking meta-learner.
#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cac::linear {

struct DegenerateFeatures : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LinearTrainConfig {
    double lambda = 1e-3;   // L2 penalty on weights (never on the intercept)
    double tol = 1e-6;      // gradient L2-norm stopping point
    int max_iters = 5000;
};

struct LogisticModel {
    std::vector<int> kept;        // input column index per model weight
    std::vector<double> mean;     // per kept column, train-set mean
    std::vector<double> stddev;   // per kept column, train-set std
    std::vector<double> weights;  // per kept column
    double bias = 0.0;
    int input_dim = 0;
    std::vector<std::string> dropped_warnings;

    // p(positive) for a raw (unstandardized) feature vector.
    double predict(std::span<const double> features) const;
};

// features: n rows by dim columns, row-major; labels in {0,1}. Zero-variance
// columns are dropped (recorded in dropped_warnings). Deterministic.
LogisticModel train_logistic(std::span<const double> features, int dim,
                             std::span<const int> labels,
                             const LinearTrainConfig& cfg = {});

}  // namespace cac::linear
