#include "cac/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cac::inference {

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Aggregator parse_aggregator(const std::string& name) {
    if (name == "min") return Aggregator::kMin;
    if (name == "mean") return Aggregator::kMean;
    if (name == "median") return Aggregator::kMedian;
    if (name == "max") return Aggregator::kMax;
    throw std::invalid_argument("unknown aggregator '" + name +
                                "' (expected min, mean, median, or max)");
}

const char* to_string(Aggregator agg) {
    switch (agg) {
        case Aggregator::kMin: return "min";
        case Aggregator::kMean: return "mean";
        case Aggregator::kMedian: return "median";
        case Aggregator::kMax: return "max";
    }
    return "?";
}

std::vector<dataset::Segment> windows(double clip_len_s, int sample_rate_hz) {
    if (!(clip_len_s > 0.0)) throw std::invalid_argument("clip length must be positive");
    const auto len = static_cast<std::int64_t>(std::llround(clip_len_s * sample_rate_hz));
    const std::int64_t win = 2 * sample_rate_hz;
    const std::int64_t hop = sample_rate_hz / 2;

    std::vector<dataset::Segment> out;
    if (len < win) {
        out.push_back({"", 0.0, 2.0, true});
        return out;
    }
    for (std::int64_t start = 0; start + win <= len; start += hop) {
        out.push_back({"", static_cast<double>(start) / sample_rate_hz, 2.0, false});
    }
    return out;
}

FileScore score_file(const audio::AudioClip& clip, const SegmentScorer& scorer) {
    FileScore fs;
    fs.source_id = clip.source_id;
    for (const auto& seg : windows(clip.duration_s(), clip.sample_rate_hz)) {
        fs.segment_probs.push_back(scorer(dataset::extract_segment(clip, seg)));
    }
    fs.file_prob = median_of(fs.segment_probs);
    return fs;
}

IndividualScore score_individual(const std::string& individual_id,
                                 std::span<const FileScore> files, Aggregator agg) {
    if (files.size() != 3) {
        throw WrongFileCount("individual " + individual_id + " has " +
                             std::to_string(files.size()) + " scored files; expected 3");
    }
    IndividualScore is;
    is.individual_id = individual_id;
    std::vector<double> probs;
    for (std::size_t i = 0; i < 3; ++i) {
        is.file_probs[i] = files[i].file_prob;
        probs.push_back(files[i].file_prob);
    }
    switch (agg) {
        case Aggregator::kMin:
            is.indiv_prob = *std::min_element(probs.begin(), probs.end());
            break;
        case Aggregator::kMean:
            is.indiv_prob = std::accumulate(probs.begin(), probs.end(), 0.0) / 3.0;
            break;
        case Aggregator::kMedian:
            is.indiv_prob = median_of(probs);
            break;
        case Aggregator::kMax:
            is.indiv_prob = *std::max_element(probs.begin(), probs.end());
            break;
    }
    return is;
}

}  // namespace cac::inference
