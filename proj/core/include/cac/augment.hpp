// Training-time augmentation: waveform noise mixing and time/frequency
// masking of log-mel patches.
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cac/audio.hpp"
#include "cac/dsp.hpp"
#include "cac/rng.hpp"

namespace cac::augment {

struct EmptyNoiseBank : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MaskWiderThanPatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoiseBank {
    std::vector<audio::AudioClip> clips;       // canonical 16 kHz mono, each >= 2 s
    std::vector<std::string> categories;       // one label per clip (file stem)

    bool empty() const { return clips.empty(); }
    std::size_t size() const { return clips.size(); }
};

struct AugmentConfig {
    double noise_prob = 0.5;
    double amp_min = 0.4;
    double amp_max = 0.75;
    int n_time_masks = 1;
    int max_time_mask_frames = 20;
    int n_freq_masks = 1;
    int max_freq_mask_bins = 8;

    void validate() const;
};

// Loads every .wav in the directory (sorted by filename), canonicalizes to
// 16 kHz mono, and tiles clips shorter than min_duration_s by repetition.
NoiseBank load_noise_bank(const std::filesystem::path& dir, double min_duration_s = 2.0);

// Adds a random 2 s crop of a random bank clip, scaled by a factor drawn
// uniformly from [amp_min, amp_max], then clamps to [-1, 1].
audio::AudioClip mix_noise(const audio::AudioClip& segment, const NoiseBank& bank,
                           const AugmentConfig& cfg, Rng& rng);

// Replaces n_time_masks column bands and n_freq_masks row bands with the
// patch mean. Widths are uniform in [0, max]; positions uniform over the
// valid range. Unmasked cells are untouched.
dsp::LogMelPatch spec_mask(const dsp::LogMelPatch& patch, const AugmentConfig& cfg, Rng& rng);

}  // namespace cac::augment
