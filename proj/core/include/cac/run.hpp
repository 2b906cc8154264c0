// Experiment orchestration: run configuration (file + environment +
// programmatic overrides), cross-validated training, evaluation with pooled
// metrics, ensembling of the per-fold predictions, and single-checkpoint
// inference over an arbitrary manifest.
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cac/augment.hpp"
#include "cac/checkpoint.hpp"
#include "cac/dataset.hpp"
#include "cac/dsp.hpp"
#include "cac/inference.hpp"
#include "cac/linear.hpp"

namespace cac::run {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kDefaultArch =
    "conv16-pool-conv32-pool-conv64-gap-dense64-dropout0.5-dense2";

// The three base models the pipeline knows how to train. conv_ls is the
// label-smoothed conv net, conv the same net with hard targets, linear the
// logistic baseline over the 86-dim hand-crafted vector.
inline constexpr const char* kKnownModels[] = {"conv_ls", "conv", "linear"};

struct RunConfig {
    std::filesystem::path manifest;
    std::filesystem::path out_dir;
    std::filesystem::path noise_dir;  // empty: skip waveform noise mixing

    std::uint64_t seed = 42;
    dataset::FoldConfig fold;

    std::string arch = kDefaultArch;
    int epochs = 15;
    double lr0 = 0.001;
    double lr_decay = 0.95;
    int lr_decay_every = 10;
    int batch_size = 32;
    double smooth_min = 0.1;
    double smooth_max = 0.3;

    augment::AugmentConfig aug;
    dsp::DspConfig dsp;
    inference::Aggregator aggregator = inference::Aggregator::kMax;
    std::vector<std::string> models = {"conv_ls", "conv", "linear"};
    int jobs = 1;

    // Throws ConfigError on out-of-range values, unknown model names, or a
    // missing manifest / noise directory.
    void validate() const;
};

// Plain-text config: one `key = value` per line, `#` comments. Unknown keys
// are an error so typos cannot silently fall back to defaults.
RunConfig load_run_config(const std::filesystem::path& path);
void set_config_option(RunConfig& cfg, const std::string& key, const std::string& value);

// CAC_SEED, when set, overrides the configured seed.
void apply_env_overrides(RunConfig& cfg);

// Splits, trains every configured model per fold, and writes out_dir/
// folds.json, out_dir/fold{i}/{model}.cmdl, and a metrics.json seeded with
// the run configuration and final training losses.
void run_train(const RunConfig& cfg);

// Scores each fold's validation individuals with that fold's checkpoints.
// Writes per-fold segments_{model}.csv and preds_{model}.csv, pooled
// roc_{model}.csv, and merges AUC/specificity/t-test summaries into
// metrics.json (top-level auc_mean/auc_std/spec_at_90sens mirror the first
// configured model).
void run_eval(const RunConfig& cfg);

// Combines the per-fold out-of-fold predictions written by run_eval. Writes
// ensemble_rank.csv (when >= 2 models), ensemble_stacked.csv, ensemble.json.
void run_ensemble(const RunConfig& cfg);

// Scores every individual in cfg.manifest with one checkpoint; writes
// predictions_segments.csv and predictions.csv into cfg.out_dir.
void run_infer(const RunConfig& cfg, const std::filesystem::path& checkpoint_path);

// The logistic baseline rides in the same checkpoint container as the conv
// nets; its arch string is "linear<input_dim>".
Checkpoint linear_to_checkpoint(const linear::LogisticModel& model);
linear::LogisticModel linear_from_checkpoint(const Checkpoint& cp);

// Write-to-temp-then-rename so readers never observe a partial file.
void atomic_write(const std::filesystem::path& path, const std::string& content);

}  // namespace cac::run
