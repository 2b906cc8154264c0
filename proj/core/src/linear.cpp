#include "cac/linear.hpp"

#include <algorithm>
#include <cmath>

namespace cac::linear {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

double LogisticModel::predict(std::span<const double> features) const {
    if (static_cast<int>(features.size()) != input_dim) {
        throw std::invalid_argument("expected " + std::to_string(input_dim) + " features");
    }
    double z = bias;
    for (std::size_t j = 0; j < kept.size(); ++j) {
        z += weights[j] * (features[static_cast<std::size_t>(kept[j])] - mean[j]) / stddev[j];
    }
    return sigmoid(z);
}

LogisticModel train_logistic(std::span<const double> features, int dim,
                             std::span<const int> labels, const LinearTrainConfig& cfg) {
    const auto n = labels.size();
    if (n == 0 || dim <= 0) throw std::invalid_argument("empty training set");
    if (features.size() != n * static_cast<std::size_t>(dim)) {
        throw std::invalid_argument("feature buffer does not match label count");
    }

    LogisticModel model;
    model.input_dim = dim;

    // Standardize per column; drop columns with zero variance.
    for (int j = 0; j < dim; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += features[i * dim + j];
        m /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = features[i * dim + j] - m;
            var += d * d;
        }
        const double sd = std::sqrt(var / static_cast<double>(n));
        if (sd <= 0.0 || !std::isfinite(sd)) {
            model.dropped_warnings.push_back("column " + std::to_string(j) +
                                             " has zero variance; dropped");
            continue;
        }
        model.kept.push_back(j);
        model.mean.push_back(m);
        model.stddev.push_back(sd);
    }
    const auto d = model.kept.size();
    if (d == 0) throw DegenerateFeatures("every feature column has zero variance");

    std::vector<double> x(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            x[i * d + j] = (features[i * dim + model.kept[j]] - model.mean[j]) / model.stddev[j];
        }
    }

    // Fixed step 1/L with the Lipschitz bound L = 0.25*max_i ||x_i||^2 + lambda
    // (logistic Hessian is bounded by 0.25 X'X/n, and rows dominate the trace).
    double max_row = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 1.0;  // intercept column
        for (std::size_t j = 0; j < d; ++j) s += x[i * d + j] * x[i * d + j];
        max_row = std::max(max_row, s);
    }
    const double lr = 1.0 / (0.25 * max_row + cfg.lambda);

    std::vector<double> w(d, 0.0);
    double b = 0.0;
    std::vector<double> grad(d, 0.0);
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = b;
            for (std::size_t j = 0; j < d; ++j) z += w[j] * x[i * d + j];
            const double r = sigmoid(z) - labels[i];
            for (std::size_t j = 0; j < d; ++j) grad[j] += r * x[i * d + j];
            gb += r;
        }
        double norm2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            grad[j] = grad[j] / static_cast<double>(n) + cfg.lambda * w[j];
            norm2 += grad[j] * grad[j];
        }
        gb /= static_cast<double>(n);
        norm2 += gb * gb;
        if (std::sqrt(norm2) < cfg.tol) break;
        for (std::size_t j = 0; j < d; ++j) w[j] -= lr * grad[j];
        b -= lr * gb;
    }

    model.weights = std::move(w);
    model.bias = b;
    return model;
}

}  // namespace cac::linear
