#include "cac/dsp.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cac/fft.hpp"

namespace cac::dsp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Mirror an out-of-range index back into [0, len) without repeating the
// edge sample (reflection padding).
std::size_t reflect_index(std::int64_t i, std::int64_t len) {
    if (len == 1) return 0;
    const std::int64_t period = 2 * (len - 1);
    std::int64_t j = i % period;
    if (j < 0) j += period;
    if (j >= len) j = period - j;
    return static_cast<std::size_t>(j);
}

double mean_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(std::span<const double> v, double mean) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void DspConfig::validate() const {
    if (sample_rate_hz <= 0) throw std::invalid_argument("sample rate must be positive");
    if (!is_power_of_two(static_cast<std::size_t>(fft_size))) {
        throw std::invalid_argument("fft_size must be a power of two");
    }
    if (fft_size < win_length()) throw std::invalid_argument("fft_size smaller than window");
    if (hop_length() <= 0) throw std::invalid_argument("hop must be positive");
    if (n_mels < 2) throw std::invalid_argument("need at least 2 mel bins");
    if (!(f_min_hz >= 0.0) || !(f_min_hz < f_max_hz) || !(f_max_hz <= sample_rate_hz / 2.0)) {
        throw std::invalid_argument("need 0 <= f_min < f_max <= Nyquist");
    }
    if (!(log_floor > 0.0)) throw std::invalid_argument("log floor must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Spectrogram stft_magnitude(const audio::AudioClip& clip, const DspConfig& cfg) {
    cfg.validate();
    if (clip.sample_rate_hz != cfg.sample_rate_hz) {
        throw ConfigMismatch("clip rate " + std::to_string(clip.sample_rate_hz) +
                             " != config rate " + std::to_string(cfg.sample_rate_hz));
    }
    if (clip.samples.empty()) throw ConfigMismatch("empty clip");

    const int win = cfg.win_length();
    const int hop = cfg.hop_length();
    const auto len = static_cast<std::int64_t>(clip.samples.size());

    // Hamming window.
    std::vector<double> window(static_cast<std::size_t>(win));
    for (int n = 0; n < win; ++n) {
        window[n] = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / (win - 1));
    }

    std::int64_t n_frames;
    std::int64_t first_offset;  // start of frame 0 relative to the signal
    if (cfg.center_pad) {
        n_frames = len / hop + 1;
        first_offset = -win / 2;
    } else {
        if (len < win) throw ConfigMismatch("clip shorter than one window");
        n_frames = (len - win) / hop + 1;
        first_offset = 0;
    }

    Spectrogram spec;
    spec.n_bins = cfg.n_bins();
    spec.n_frames = static_cast<int>(n_frames);
    spec.values.assign(static_cast<std::size_t>(spec.n_bins) * spec.n_frames, 0.0);
    spec.frame_times.resize(static_cast<std::size_t>(n_frames));

    std::vector<double> frame(static_cast<std::size_t>(win));
    for (std::int64_t t = 0; t < n_frames; ++t) {
        spec.frame_times[static_cast<std::size_t>(t)] =
            static_cast<double>(t) * hop / cfg.sample_rate_hz;
        const std::int64_t start = first_offset + t * hop;
        for (int n = 0; n < win; ++n) {
            const std::int64_t i = start + n;
            double s;
            if (i >= 0 && i < len) {
                s = clip.samples[static_cast<std::size_t>(i)];
            } else if (cfg.center_pad) {
                s = clip.samples[reflect_index(i, len)];
            } else {
                s = 0.0;
            }
            frame[n] = s * window[n];
        }
        auto bins = fft_real(frame, static_cast<std::size_t>(cfg.fft_size));
        for (int f = 0; f < spec.n_bins; ++f) {
            spec.values[static_cast<std::size_t>(f) * n_frames + t] = std::abs(bins[f]);
        }
    }
    return spec;
}

MelFilterbank::MelFilterbank(const DspConfig& cfg) {
    cfg.validate();
    n_mels_ = cfg.n_mels;
    n_bins_ = cfg.n_bins();
    log_floor_ = cfg.log_floor;
    weights_.assign(static_cast<std::size_t>(n_mels_) * n_bins_, 0.0);
    peaks_hz_.resize(static_cast<std::size_t>(n_mels_));

    const double mel_min = hz_to_mel(cfg.f_min_hz);
    const double mel_max = hz_to_mel(cfg.f_max_hz);
    const double step = (mel_max - mel_min) / (n_mels_ + 1);

    std::vector<double> edges_hz(static_cast<std::size_t>(n_mels_) + 2);
    for (int i = 0; i < n_mels_ + 2; ++i) edges_hz[i] = mel_to_hz(mel_min + i * step);
    for (int m = 0; m < n_mels_; ++m) peaks_hz_[m] = edges_hz[m + 1];

    const double bin_hz = static_cast<double>(cfg.sample_rate_hz) / cfg.fft_size;
    for (int m = 0; m < n_mels_; ++m) {
        const double lo = edges_hz[m], peak = edges_hz[m + 1], hi = edges_hz[m + 2];
        for (int k = 0; k < n_bins_; ++k) {
            const double f = k * bin_hz;
            double w = 0.0;
            if (f > lo && f < hi) {
                w = f <= peak ? (f - lo) / (peak - lo) : (hi - f) / (hi - peak);
            }
            weights_[static_cast<std::size_t>(m) * n_bins_ + k] = w;
        }
    }
}

LogMelPatch MelFilterbank::apply(const Spectrogram& spec) const {
    if (spec.n_bins != n_bins_) {
        throw ConfigMismatch("spectrogram has " + std::to_string(spec.n_bins) +
                             " bins, filterbank expects " + std::to_string(n_bins_));
    }
    LogMelPatch patch;
    patch.n_mels = n_mels_;
    patch.n_frames = spec.n_frames;
    patch.values.resize(static_cast<std::size_t>(n_mels_) * spec.n_frames);

    Eigen::Map<const RowMat> weights(weights_.data(), n_mels_, n_bins_);
    Eigen::Map<const RowMat> mags(spec.values.data(), spec.n_bins, spec.n_frames);
    Eigen::Map<RowMat> out(patch.values.data(), n_mels_, spec.n_frames);
    out.noalias() = weights * mags;
    out = (out.array() + log_floor_).log();
    return patch;
}

LogMelPatch mel_project(const Spectrogram& spec, const DspConfig& cfg) {
    return MelFilterbank(cfg).apply(spec);
}

double fit_rescale(std::span<const LogMelPatch> train_patches) {
    if (train_patches.empty()) throw EmptyTrainingSet("no training patches to fit rescale");
    double max_abs = 0.0;
    for (const auto& patch : train_patches) {
        for (double v : patch.values) max_abs = std::max(max_abs, std::abs(v));
    }
    return max_abs;
}

double fit_rescale(std::span<const LogMelPatch* const> train_patches) {
    if (train_patches.empty()) throw EmptyTrainingSet("no training patches to fit rescale");
    double max_abs = 0.0;
    for (const auto* patch : train_patches) {
        for (double v : patch->values) max_abs = std::max(max_abs, std::abs(v));
    }
    return max_abs;
}

LogMelPatch apply_rescale(const LogMelPatch& patch, double scale) {
    if (!(scale > 0.0)) throw NonPositiveScale("rescale scale must be positive");
    LogMelPatch out = patch;
    for (double& v : out.values) v = std::clamp(v / scale, -1.0, 1.0);
    out.scale_applied = scale;
    return out;
}

io::MatF32 patch_to_mat(const LogMelPatch& patch) {
    io::MatF32 mat;
    mat.rows = static_cast<std::uint16_t>(patch.n_mels);
    mat.cols = static_cast<std::uint32_t>(patch.n_frames);
    mat.values.assign(patch.values.begin(), patch.values.end());
    return mat;
}

LogMelPatch mat_to_patch(const io::MatF32& mat) {
    LogMelPatch patch;
    patch.n_mels = mat.rows;
    patch.n_frames = static_cast<int>(mat.cols);
    patch.values.assign(mat.values.begin(), mat.values.end());
    return patch;
}

HandcraftedFeatures handcrafted(const audio::AudioClip& clip, const DspConfig& cfg) {
    cfg.validate();
    if (clip.sample_rate_hz != cfg.sample_rate_hz) {
        throw ConfigMismatch("clip rate does not match config");
    }
    const int win = cfg.win_length();
    const int hop = cfg.hop_length();
    const auto len = static_cast<std::int64_t>(clip.samples.size());
    if (len < win) {
        throw ClipTooShort("clip of " + std::to_string(len) + " samples is shorter than one " +
                           std::to_string(win) + "-sample frame");
    }

    const Spectrogram spec = stft_magnitude(clip, cfg);
    const LogMelPatch patch = mel_project(spec, cfg);
    const int frames = patch.n_frames;
    constexpr int kMfcc = HandcraftedFeatures::kMfcc;

    // Orthonormal DCT-II basis over the mel axis, coefficients 1..13.
    const int n_mels = patch.n_mels;
    std::vector<double> dct(static_cast<std::size_t>(kMfcc) * n_mels);
    const double norm = std::sqrt(2.0 / n_mels);
    for (int k = 1; k <= kMfcc; ++k) {
        for (int n = 0; n < n_mels; ++n) {
            dct[static_cast<std::size_t>(k - 1) * n_mels + n] =
                norm * std::cos(M_PI * (2 * n + 1) * k / (2.0 * n_mels));
        }
    }

    // mfcc[k][t], then deltas by 2-frame central difference (edges one-sided).
    std::vector<std::vector<double>> mfcc(kMfcc, std::vector<double>(frames));
    for (int t = 0; t < frames; ++t) {
        for (int k = 0; k < kMfcc; ++k) {
            double acc = 0.0;
            for (int n = 0; n < n_mels; ++n) {
                acc += dct[static_cast<std::size_t>(k) * n_mels + n] * patch.at(n, t);
            }
            mfcc[k][t] = acc;
        }
    }
    std::vector<std::vector<double>> delta(kMfcc, std::vector<double>(frames));
    for (int k = 0; k < kMfcc; ++k) {
        for (int t = 0; t < frames; ++t) {
            const int t0 = std::max(0, t - 1);
            const int t1 = std::min(frames - 1, t + 1);
            delta[k][t] = (mfcc[k][t1] - mfcc[k][t0]) / 2.0;
        }
    }

    // Time-domain frames (no padding) for RMS and zero-crossing rate.
    const auto n_raw = static_cast<std::size_t>((len - win) / hop + 1);
    std::vector<double> rms(n_raw), zcr(n_raw);
    for (std::size_t i = 0; i < n_raw; ++i) {
        const float* x = clip.samples.data() + i * static_cast<std::size_t>(hop);
        double energy = 0.0;
        int crossings = 0;
        for (int n = 0; n < win; ++n) {
            energy += static_cast<double>(x[n]) * x[n];
            if (n > 0 && static_cast<double>(x[n - 1]) * x[n] < 0.0) ++crossings;
        }
        rms[i] = std::sqrt(energy / win);
        zcr[i] = static_cast<double>(crossings) / (win - 1);
    }

    // Spectral shape statistics per frame.
    const double bin_hz = static_cast<double>(cfg.sample_rate_hz) / cfg.fft_size;
    std::vector<double> centroid(frames), rolloff(frames), bandwidth(frames);
    for (int t = 0; t < frames; ++t) {
        double total = 0.0, weighted = 0.0;
        for (int k = 0; k < spec.n_bins; ++k) {
            total += spec.at(k, t);
            weighted += spec.at(k, t) * k * bin_hz;
        }
        if (total <= 1e-12) {
            centroid[t] = rolloff[t] = bandwidth[t] = 0.0;
            continue;
        }
        centroid[t] = weighted / total;
        double cum = 0.0;
        for (int k = 0; k < spec.n_bins; ++k) {
            cum += spec.at(k, t);
            if (cum >= 0.85 * total) {
                rolloff[t] = k * bin_hz;
                break;
            }
        }
        double var = 0.0;
        for (int k = 0; k < spec.n_bins; ++k) {
            const double d = k * bin_hz - centroid[t];
            var += spec.at(k, t) * d * d;
        }
        bandwidth[t] = std::sqrt(var / total);
    }

    // Onset rate: spectral-flux peaks per second. A peak is a strict local
    // maximum above mean + std of the flux curve.
    double onset_rate = 0.0;
    if (frames >= 2) {
        std::vector<double> flux(static_cast<std::size_t>(frames) - 1);
        for (int t = 1; t < frames; ++t) {
            double acc = 0.0;
            for (int k = 0; k < spec.n_bins; ++k) {
                acc += std::max(0.0, spec.at(k, t) - spec.at(k, t - 1));
            }
            flux[static_cast<std::size_t>(t) - 1] = acc;
        }
        const double fm = mean_of(flux);
        const double fs = std_of(flux, fm);
        int peaks = 0;
        for (std::size_t t = 1; t + 1 < flux.size(); ++t) {
            if (flux[t] > flux[t - 1] && flux[t] > flux[t + 1] && flux[t] > fm + fs) ++peaks;
        }
        onset_rate = peaks / clip.duration_s();
    }

    HandcraftedFeatures feat;
    auto& v = feat.values;
    for (int k = 0; k < kMfcc; ++k) {
        const double m = mean_of(mfcc[k]);
        v[k] = m;
        v[kMfcc + k] = std_of(mfcc[k], m);
        v[2 * kMfcc + k] = median_of(mfcc[k]);
        const double dm = mean_of(delta[k]);
        v[3 * kMfcc + k] = dm;
        v[4 * kMfcc + k] = std_of(delta[k], dm);
        v[5 * kMfcc + k] = median_of(delta[k]);
    }
    const double rms_mean = mean_of(rms);
    const double zcr_mean = mean_of(zcr);
    v[78] = rms_mean;
    v[79] = std_of(rms, rms_mean);
    v[80] = zcr_mean;
    v[81] = std_of(zcr, zcr_mean);
    v[82] = mean_of(centroid);
    v[83] = mean_of(rolloff);
    v[84] = mean_of(bandwidth);
    v[85] = onset_rate;
    return feat;
}

}  // namespace cac::dsp
