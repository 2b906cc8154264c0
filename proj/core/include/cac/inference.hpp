// Deterministic scoring: sliding 2 s windows at 500 ms hop, median over
// segment probabilities per file, configurable aggregation over the three
// files of an individual.
#pragma once

#include <array>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cac/audio.hpp"
#include "cac/dataset.hpp"

namespace cac::inference {

struct WrongFileCount : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Aggregator { kMin, kMean, kMedian, kMax };

Aggregator parse_aggregator(const std::string& name);
const char* to_string(Aggregator agg);

// Window starts every 0.5 s while a full 2 s fits; shorter clips give one
// zero-padded window at 0. Sample-exact: n = (len - 2s) / 0.5s + 1.
std::vector<dataset::Segment> windows(double clip_len_s,
                                      int sample_rate_hz = audio::kCanonicalRateHz);

// Maps one exactly-2 s clip to p(positive). Implementations bundle the dsp
// config, the train-fitted rescale, and a trained model.
using SegmentScorer = std::function<double(const audio::AudioClip&)>;

struct FileScore {
    std::string source_id;
    std::vector<double> segment_probs;
    double file_prob = 0.0;  // median of segment_probs (even count: midpoint)
};

struct IndividualScore {
    std::string individual_id;
    std::array<double, 3> file_probs{};
    double indiv_prob = 0.0;
};

FileScore score_file(const audio::AudioClip& clip, const SegmentScorer& scorer);

IndividualScore score_individual(const std::string& individual_id,
                                 std::span<const FileScore> files,
                                 Aggregator agg = Aggregator::kMax);

}  // namespace cac::inference
