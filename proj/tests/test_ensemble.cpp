#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <vector>

#include "cac/ensemble.hpp"
#include "cac/eval.hpp"
#include "cac/rng.hpp"
#include "doctest.h"

using namespace cac;

namespace {

ensemble::PredictionMatrix matrix_of(const std::vector<std::vector<double>>& cols,
                                     const std::vector<int>& labels) {
    ensemble::PredictionMatrix m;
    const std::size_t n = labels.size();
    for (std::size_t i = 0; i < n; ++i) m.ids.push_back("id" + std::to_string(i));
    m.labels = labels;
    for (std::size_t c = 0; c < cols.size(); ++c) m.model_names.push_back("m" + std::to_string(c));
    m.values.resize(n * cols.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cols.size(); ++c) m.values[i * cols.size() + c] = cols[c][i];
    m.provenance.assign(n, -1);
    return m;
}

double auc_of(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::vector<std::pair<double, int>> scored;
    for (std::size_t i = 0; i < scores.size(); ++i) scored.emplace_back(scores[i], labels[i]);
    return eval::roc(scored).auc;
}

std::vector<std::size_t> ranking(const std::vector<double>& scores) {
    std::vector<std::size_t> idx(scores.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    return idx;
}

}  // namespace

TEST_CASE("rank ensembling needs at least two models") {
    const auto m = matrix_of({{0.1, 0.2, 0.3}}, {0, 1, 1});
    CHECK_THROWS_AS(ensemble::rank_ensemble(m), ensemble::SingleModel);
}

TEST_CASE("identical columns reproduce the column ordering") {
    const std::vector<double> col{0.4, 0.1, 0.9, 0.6};
    const auto out = ensemble::rank_ensemble(matrix_of({col, col}, {0, 0, 1, 1}));
    CHECK(ranking(out) == ranking(col));
}

TEST_CASE("rank ensemble ignores monotone distortions of a column") {
    const std::vector<double> a{0.1, 0.5, 0.3, 0.9, 0.7};
    std::vector<double> squashed;
    for (const double v : a) squashed.push_back(1.0 / (1.0 + std::exp(-10.0 * v)));
    const std::vector<double> b{0.2, 0.6, 0.4, 0.8, 0.5};
    const auto out1 = ensemble::rank_ensemble(matrix_of({a, b}, {0, 1, 0, 1, 1}));
    const auto out2 = ensemble::rank_ensemble(matrix_of({squashed, b}, {0, 1, 0, 1, 1}));
    CHECK(ranking(out1) == ranking(out2));
}

TEST_CASE("hand built rank table") {
    // Columns [0.1,0.2,0.3] and [0.3,0.1,0.2] give ranks (1,2,3) and (3,1,2);
    // normalized to [0,1] by (r-1)/2 and averaged: {0.5, 0.25, 0.75}.
    const auto out =
        ensemble::rank_ensemble(matrix_of({{0.1, 0.2, 0.3}, {0.3, 0.1, 0.2}}, {0, 0, 1}));
    REQUIRE(out.size() == 3);
    CHECK(out[0] == doctest::Approx(0.5));
    CHECK(out[1] == doctest::Approx(0.25));
    CHECK(out[2] == doctest::Approx(0.75));
}

TEST_CASE("tied scores share their average rank") {
    // Ties at 0.5 occupy ranks 2 and 3, so both get 2.5 -> (2.5-1)/3.
    const auto out =
        ensemble::rank_ensemble(matrix_of({{0.2, 0.5, 0.5, 0.9}, {0.2, 0.5, 0.5, 0.9}}, {0, 0, 1, 1}));
    CHECK(out[1] == doctest::Approx(1.5 / 3.0));
    CHECK(out[2] == doctest::Approx(1.5 / 3.0));
}

TEST_CASE("a single base model stacks to its own AUC") {
    Rng rng(5);
    std::vector<double> col;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
        const double p = rng.uniform();
        col.push_back(p);
        labels.push_back(rng.uniform() < p ? 1 : 0);
    }
    if (std::count(labels.begin(), labels.end(), 1) == 0) labels[0] = 1;
    if (std::count(labels.begin(), labels.end(), 0) == 0) labels[0] = 0;
    const auto m = matrix_of({col}, labels);
    const auto stacked = ensemble::stack(m);
    CHECK(std::abs(auc_of(stacked.oof_scores, labels) - auc_of(col, labels)) < 1e-6);
}

TEST_CASE("duplicating a column does not move stacked predictions") {
    Rng rng(6);
    std::vector<double> col;
    std::vector<int> labels;
    for (int i = 0; i < 50; ++i) {
        const double p = rng.uniform();
        col.push_back(p);
        labels.push_back(rng.uniform() < 0.3 + 0.4 * p ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    linear::LinearTrainConfig cfg;
    cfg.lambda = 1e-8;
    const auto one = ensemble::stack(matrix_of({col}, labels), cfg);
    const auto two = ensemble::stack(matrix_of({col, col}, labels), cfg);
    for (std::size_t i = 0; i < one.oof_scores.size(); ++i)
        CHECK(two.oof_scores[i] == doctest::Approx(one.oof_scores[i]).epsilon(1e-6));
}

TEST_CASE("perfect plus random stays within a whisker of perfect") {
    Rng rng(7);
    std::vector<double> perfect, random_col;
    std::vector<int> labels;
    for (int i = 0; i < 100; ++i) {
        const int label = i % 2;
        labels.push_back(label);
        perfect.push_back(label ? rng.uniform(0.7, 1.0) : rng.uniform(0.0, 0.3));
        random_col.push_back(rng.uniform());
    }
    const auto m = matrix_of({perfect, random_col}, labels);
    const auto stacked = ensemble::stack(m);
    const double base = auc_of(perfect, labels);
    CHECK(auc_of(stacked.oof_scores, labels) >= base - 0.02);
}

TEST_CASE("provenance overlapping its own training fold is leakage") {
    Rng rng(8);
    std::vector<double> col;
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) {
        col.push_back(rng.uniform());
        labels.push_back(i % 2);
    }
    auto m = matrix_of({col, col}, labels);
    for (std::size_t i = 0; i < m.provenance.size(); ++i)
        m.provenance[i] = static_cast<int>(i % 2);

    std::vector<std::unordered_set<std::string>> fold_train_sets(2);
    fold_train_sets[0].insert("id0");  // fold 0 trained on id0, which it scored
    CHECK_THROWS_AS(ensemble::stack(m, linear::LinearTrainConfig{}, fold_train_sets),
                    ensemble::LeakageDetected);

    // Clean provenance passes: each row scored by the other fold's models.
    std::vector<std::unordered_set<std::string>> clean(2);
    for (std::size_t i = 0; i < m.ids.size(); ++i)
        clean[(i + 1) % 2].insert(m.ids[i]);
    CHECK_NOTHROW(ensemble::stack(m, linear::LinearTrainConfig{}, clean));
}

TEST_CASE("matrix validation rejects ragged input") {
    auto m = matrix_of({{0.1, 0.2}, {0.3, 0.4}}, {0, 1});
    m.values.pop_back();
    CHECK_THROWS(m.validate());
}

TEST_CASE("identical models ensemble to the single model ranking") {
    const std::vector<double> col{0.15, 0.85, 0.4, 0.6, 0.25};
    const std::vector<int> labels{0, 1, 0, 1, 0};
    const auto out = ensemble::rank_ensemble(matrix_of({col, col, col}, labels));
    CHECK(ranking(out) == ranking(col));
    CHECK(auc_of(out, labels) == doctest::Approx(auc_of(col, labels)));
}
