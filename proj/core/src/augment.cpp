#include "cac/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cac::augment {

void AugmentConfig::validate() const {
    if (!(noise_prob >= 0.0 && noise_prob <= 1.0)) {
        throw std::invalid_argument("noise_prob outside [0,1]");
    }
    if (!(amp_min >= 0.0 && amp_min <= amp_max)) {
        throw std::invalid_argument("need 0 <= amp_min <= amp_max");
    }
    if (n_time_masks < 0 || n_freq_masks < 0 || max_time_mask_frames < 0 ||
        max_freq_mask_bins < 0) {
        throw std::invalid_argument("mask counts and widths must be non-negative");
    }
}

NoiseBank load_noise_bank(const std::filesystem::path& dir, double min_duration_s) {
    std::vector<std::filesystem::path> paths;
    if (std::filesystem::is_directory(dir)) {
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".wav") {
                paths.push_back(entry.path());
            }
        }
    }
    std::sort(paths.begin(), paths.end());

    NoiseBank bank;
    const auto min_samples =
        static_cast<std::size_t>(std::llround(min_duration_s * audio::kCanonicalRateHz));
    for (const auto& p : paths) {
        auto clip = audio::canonicalize(audio::load_wav(p));
        if (clip.samples.size() < min_samples) {
            std::vector<float> tiled;
            tiled.reserve(min_samples);
            while (tiled.size() < min_samples) {
                tiled.insert(tiled.end(), clip.samples.begin(), clip.samples.end());
            }
            clip.samples = std::move(tiled);
        }
        bank.categories.push_back(p.stem().string());
        bank.clips.push_back(std::move(clip));
    }
    return bank;
}

audio::AudioClip mix_noise(const audio::AudioClip& segment, const NoiseBank& bank,
                           const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    if (bank.empty()) throw EmptyNoiseBank("noise bank has no clips");

    const auto pick = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(bank.size()) - 1));
    const auto& noise = bank.clips[pick];
    if (noise.samples.size() < segment.samples.size()) {
        throw EmptyNoiseBank("noise clip shorter than segment; bank not tiled");
    }
    const auto max_start =
        static_cast<std::int64_t>(noise.samples.size() - segment.samples.size());
    const auto start = static_cast<std::size_t>(rng.uniform_int(0, max_start));
    const double amp = rng.uniform(cfg.amp_min, cfg.amp_max);

    audio::AudioClip out = segment;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const double v = out.samples[i] + amp * noise.samples[start + i];
        out.samples[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
    return out;
}

dsp::LogMelPatch spec_mask(const dsp::LogMelPatch& patch, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    if (cfg.max_time_mask_frames > patch.n_frames || cfg.max_freq_mask_bins > patch.n_mels) {
        throw MaskWiderThanPatch("mask width exceeds patch dimensions");
    }

    const double fill =
        std::accumulate(patch.values.begin(), patch.values.end(), 0.0) /
        static_cast<double>(patch.values.size());

    dsp::LogMelPatch out = patch;
    for (int i = 0; i < cfg.n_time_masks; ++i) {
        const int w = static_cast<int>(rng.uniform_int(0, cfg.max_time_mask_frames));
        const int start = static_cast<int>(rng.uniform_int(0, patch.n_frames - w));
        for (int m = 0; m < patch.n_mels; ++m) {
            for (int t = start; t < start + w; ++t) out.at(m, t) = fill;
        }
    }
    for (int i = 0; i < cfg.n_freq_masks; ++i) {
        const int w = static_cast<int>(rng.uniform_int(0, cfg.max_freq_mask_bins));
        const int start = static_cast<int>(rng.uniform_int(0, patch.n_mels - w));
        for (int m = start; m < start + w; ++m) {
            for (int t = 0; t < patch.n_frames; ++t) out.at(m, t) = fill;
        }
    }
    return out;
}

}  // namespace cac::augment
