// Feature front end: framing, Hamming window, FFT magnitude, mel
// projection, log transform, train-set rescaling, and the hand-crafted
// feature vector for the shallow baseline.
#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cac/audio.hpp"
#include "cac/matrix_io.hpp"

namespace cac::dsp {

struct DspConfig {
    int sample_rate_hz = 16000;
    double win_ms = 32.0;
    double hop_ms = 10.0;
    int fft_size = 512;
    int n_mels = 64;
    double f_min_hz = 125.0;
    double f_max_hz = 7500.0;
    bool center_pad = true;
    double log_floor = 1e-10;  // added before the log so silence maps to log(1e-10)

    int win_length() const { return static_cast<int>(win_ms * sample_rate_hz / 1000.0 + 0.5); }
    int hop_length() const { return static_cast<int>(hop_ms * sample_rate_hz / 1000.0 + 0.5); }
    int n_bins() const { return fft_size / 2 + 1; }

    // Throws std::invalid_argument if the geometry is inconsistent.
    void validate() const;
};

struct ConfigMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyTrainingSet : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonPositiveScale : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ClipTooShort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Magnitude spectrogram, row-major (n_bins x n_frames).
struct Spectrogram {
    int n_bins = 0;
    int n_frames = 0;
    std::vector<double> values;
    std::vector<double> frame_times;  // seconds, one per frame

    double at(int bin, int frame) const {
        return values[static_cast<std::size_t>(bin) * n_frames + frame];
    }
};

// Log-mel patch, row-major (n_mels x n_frames).
struct LogMelPatch {
    int n_mels = 0;
    int n_frames = 0;
    std::vector<double> values;
    std::optional<double> scale_applied;

    double at(int mel, int frame) const {
        return values[static_cast<std::size_t>(mel) * n_frames + frame];
    }
    double& at(int mel, int frame) {
        return values[static_cast<std::size_t>(mel) * n_frames + frame];
    }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Windows the clip (Hamming, 0.54 - 0.46 cos) at the configured hop. With
// center_pad the signal is reflection-padded by win/2 on both ends, giving
// floor(len/hop) + 1 frames: 201 for two seconds at the default geometry.
Spectrogram stft_magnitude(const audio::AudioClip& clip, const DspConfig& cfg);

// Triangular mel filterbank with unit-peak filters whose centers are evenly
// spaced on the mel scale between f_min and f_max.
class MelFilterbank {
public:
    explicit MelFilterbank(const DspConfig& cfg);

    LogMelPatch apply(const Spectrogram& spec) const;

    int n_mels() const { return n_mels_; }
    int n_bins() const { return n_bins_; }
    double weight(int mel, int bin) const {
        return weights_[static_cast<std::size_t>(mel) * n_bins_ + bin];
    }
    double peak_hz(int mel) const { return peaks_hz_[mel]; }

private:
    int n_mels_ = 0;
    int n_bins_ = 0;
    double log_floor_ = 1e-10;
    std::vector<double> weights_;  // n_mels x n_bins
    std::vector<double> peaks_hz_;
};

// Builds the filterbank internally; prefer a shared MelFilterbank in hot loops.
LogMelPatch mel_project(const Spectrogram& spec, const DspConfig& cfg);

// Largest absolute log-mel value over the training patches.
double fit_rescale(std::span<const LogMelPatch> train_patches);
double fit_rescale(std::span<const LogMelPatch* const> train_patches);

// Divides by the fitted scale and clamps to [-1, 1] (values outside the
// training range, e.g. validation clips, are clamped).
LogMelPatch apply_rescale(const LogMelPatch& patch, double scale);

// Fixed 86-dimensional summary vector: mean/std/median of 13 MFCCs and of
// their 2-frame central-difference deltas, RMS energy mean/std, zero
// crossing rate mean/std, spectral centroid / rolloff(0.85) / bandwidth
// means, and a spectral-flux onset rate.
struct HandcraftedFeatures {
    static constexpr int kMfcc = 13;
    static constexpr int kDim = 86;
    std::array<double, kDim> values{};
};

HandcraftedFeatures handcrafted(const audio::AudioClip& clip, const DspConfig& cfg);

// Cache round trip: patches are stored as float32 matrices (n_mels rows).
io::MatF32 patch_to_mat(const LogMelPatch& patch);
LogMelPatch mat_to_patch(const io::MatF32& mat);

}  // namespace cac::dsp
