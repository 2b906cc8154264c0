#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <vector>

#include "cac/dsp.hpp"
#include "cac/matrix_io.hpp"
#include "cac/rng.hpp"
#include "doctest.h"

using namespace cac;

namespace {

audio::AudioClip tone(double freq, double seconds, double amp = 0.5,
                      int rate = audio::kCanonicalRateHz) {
    audio::AudioClip clip;
    clip.sample_rate_hz = rate;
    const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        clip.samples[i] = static_cast<float>(
            amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate));
    return clip;
}

std::filesystem::path data_dir() { return CAC_TEST_DATA_DIR; }

}  // namespace

TEST_CASE("two seconds give 257 by 201") {
    const dsp::DspConfig cfg;
    const auto spec = dsp::stft_magnitude(tone(1000.0, 2.0), cfg);
    CHECK(spec.n_bins == 257);
    CHECK(spec.n_frames == 201);
    const auto patch = dsp::mel_project(spec, cfg);
    CHECK(patch.n_mels == 64);
    CHECK(patch.n_frames == 201);
}

TEST_CASE("raw framing gives 197 frames for two seconds") {
    dsp::DspConfig cfg;
    cfg.center_pad = false;
    const auto spec = dsp::stft_magnitude(tone(1000.0, 2.0), cfg);
    CHECK(spec.n_frames == 197);
}

TEST_CASE("silence maps to a zero spectrogram") {
    audio::AudioClip clip;
    clip.sample_rate_hz = 16000;
    clip.samples.assign(32000, 0.0f);
    const auto spec = dsp::stft_magnitude(clip, dsp::DspConfig{});
    for (const double v : spec.values) CHECK(v == 0.0);
}

TEST_CASE("1 kHz sine peaks at bin 32 in every interior frame") {
    const dsp::DspConfig cfg;
    const auto spec = dsp::stft_magnitude(tone(1000.0, 2.0), cfg);
    for (int t = 2; t < spec.n_frames - 2; ++t) {
        int best = 0;
        double best_mag = -1.0;
        for (int k = 0; k < spec.n_bins; ++k) {
            if (spec.at(k, t) > best_mag) {
                best_mag = spec.at(k, t);
                best = k;
            }
        }
        CHECK(best == 32);
    }
}

TEST_CASE("frame energy balances windowed time energy") {
    dsp::DspConfig cfg;
    cfg.center_pad = false;
    Rng rng(5);
    audio::AudioClip clip;
    clip.sample_rate_hz = 16000;
    clip.samples.resize(512);
    for (auto& v : clip.samples) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const auto spec = dsp::stft_magnitude(clip, cfg);
    REQUIRE(spec.n_frames == 1);

    double time_e = 0.0;
    const int win = cfg.win_length();
    for (int n = 0; n < win; ++n) {
        const double w =
            0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / static_cast<double>(win - 1));
        time_e += (w * clip.samples[static_cast<std::size_t>(n)]) *
                  (w * clip.samples[static_cast<std::size_t>(n)]);
    }
    double freq_e = spec.at(0, 0) * spec.at(0, 0) + spec.at(256, 0) * spec.at(256, 0);
    for (int k = 1; k < 256; ++k) freq_e += 2.0 * spec.at(k, 0) * spec.at(k, 0);
    CHECK(freq_e / 512.0 == doctest::Approx(time_e).epsilon(1e-6));
}

TEST_CASE("rate mismatch is rejected") {
    CHECK_THROWS_AS(dsp::stft_magnitude(tone(440.0, 0.5, 0.5, 8000), dsp::DspConfig{}),
                    dsp::ConfigMismatch);
}

TEST_CASE("mel scale fixed points") {
    CHECK(dsp::hz_to_mel(0.0) == doctest::Approx(0.0));
    CHECK(dsp::hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-12));
    CHECK(dsp::mel_to_hz(dsp::hz_to_mel(1234.5)) == doctest::Approx(1234.5).epsilon(1e-9));
}

TEST_CASE("filterbank is nonnegative with increasing peaks and full band coverage") {
    const dsp::DspConfig cfg;
    const dsp::MelFilterbank fb(cfg);
    const double bin_hz = cfg.sample_rate_hz / static_cast<double>(cfg.fft_size);
    std::vector<double> column_sum(static_cast<std::size_t>(fb.n_bins()), 0.0);
    for (int m = 0; m < fb.n_mels(); ++m) {
        for (int k = 0; k < fb.n_bins(); ++k) {
            CHECK(fb.weight(m, k) >= 0.0);
            column_sum[static_cast<std::size_t>(k)] += fb.weight(m, k);
        }
        if (m > 0) CHECK(fb.peak_hz(m) > fb.peak_hz(m - 1));
    }
    for (int k = 0; k < fb.n_bins(); ++k) {
        const double f = k * bin_hz;
        if (f > cfg.f_min_hz && f < cfg.f_max_hz) CHECK(column_sum[static_cast<std::size_t>(k)] > 0.0);
    }
}

TEST_CASE("scaling magnitudes shifts log-mels by exactly log c") {
    const dsp::DspConfig cfg;
    Rng rng(17);
    dsp::Spectrogram spec;
    spec.n_bins = cfg.n_bins();
    spec.n_frames = 12;
    spec.values.resize(static_cast<std::size_t>(spec.n_bins) * spec.n_frames);
    for (auto& v : spec.values) v = rng.uniform(0.5, 1.0);
    spec.frame_times.assign(static_cast<std::size_t>(spec.n_frames), 0.0);

    auto scaled = spec;
    const double c = 3.7;
    for (auto& v : scaled.values) v *= c;

    const auto a = dsp::mel_project(spec, cfg);
    const auto b = dsp::mel_project(scaled, cfg);
    for (std::size_t i = 0; i < a.values.size(); ++i)
        CHECK(b.values[i] - a.values[i] == doctest::Approx(std::log(c)).epsilon(1e-9));
}

TEST_CASE("rescale fitting takes the largest magnitude") {
    dsp::LogMelPatch p1;
    p1.n_mels = 1;
    p1.n_frames = 2;
    p1.values = {-23.0, 1.0};
    CHECK(dsp::fit_rescale(std::vector<dsp::LogMelPatch>{p1}) == doctest::Approx(23.0));

    dsp::LogMelPatch p2 = p1, p3 = p1;
    p2.values = {-5.0, 0.0};
    p3.values = {7.0, 0.0};
    CHECK(dsp::fit_rescale(std::vector<dsp::LogMelPatch>{p2, p3}) == doctest::Approx(7.0));

    const dsp::LogMelPatch* ptrs[] = {&p2, &p3};
    CHECK(dsp::fit_rescale(std::span<const dsp::LogMelPatch* const>(ptrs)) == doctest::Approx(7.0));

    CHECK_THROWS_AS(dsp::fit_rescale(std::vector<dsp::LogMelPatch>{}), dsp::EmptyTrainingSet);
}

TEST_CASE("rescale divides, records, and clamps") {
    dsp::LogMelPatch p;
    p.n_mels = 1;
    p.n_frames = 3;
    p.values = {-4.0, 2.0, -9.0};
    const auto out = dsp::apply_rescale(p, 4.0);
    CHECK(out.values[0] == doctest::Approx(-1.0));
    CHECK(out.values[1] == doctest::Approx(0.5));
    CHECK(out.values[2] == doctest::Approx(-1.0));  // clamped
    REQUIRE(out.scale_applied.has_value());
    CHECK(*out.scale_applied == doctest::Approx(4.0));

    dsp::LogMelPatch zeros;
    zeros.n_mels = 1;
    zeros.n_frames = 2;
    zeros.values = {0.0, 0.0};
    const auto z = dsp::apply_rescale(zeros, 5.0);
    CHECK(z.values[0] == 0.0);
    CHECK(z.values[1] == 0.0);

    CHECK_THROWS_AS(dsp::apply_rescale(p, 0.0), dsp::NonPositiveScale);
    CHECK_THROWS_AS(dsp::apply_rescale(p, -1.0), dsp::NonPositiveScale);
}

TEST_CASE("fitted scale bounds every training value") {
    const dsp::DspConfig cfg;
    std::vector<dsp::LogMelPatch> patches;
    for (int i = 0; i < 3; ++i)
        patches.push_back(dsp::mel_project(
            dsp::stft_magnitude(tone(300.0 + 200.0 * i, 2.0, 0.2 + 0.2 * i), cfg), cfg));
    const double scale = dsp::fit_rescale(patches);
    for (const auto& p : patches) {
        const auto r = dsp::apply_rescale(p, scale);
        for (const double v : r.values) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("handcrafted vector has 86 entries and is bit deterministic") {
    const auto clip = tone(440.0, 1.0);
    const auto a = dsp::handcrafted(clip, dsp::DspConfig{});
    const auto b = dsp::handcrafted(clip, dsp::DspConfig{});
    CHECK(a.values.size() == 86);
    CHECK(dsp::HandcraftedFeatures::kDim == 86);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        CHECK(std::isfinite(a.values[i]));
        CHECK(a.values[i] == b.values[i]);
    }
}

TEST_CASE("silence has zero energy and zero crossings") {
    audio::AudioClip clip;
    clip.sample_rate_hz = 16000;
    clip.samples.assign(16000, 0.0f);
    const auto feat = dsp::handcrafted(clip, dsp::DspConfig{});
    CHECK(feat.values[78] == doctest::Approx(0.0));  // RMS mean
    CHECK(feat.values[80] == doctest::Approx(0.0));  // ZCR mean
}

TEST_CASE("square wave crossing rate matches a direct count") {
    audio::AudioClip clip;
    clip.sample_rate_hz = 16000;
    clip.samples.resize(16000);
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const double phase = 100.0 * static_cast<double>(i) / 16000.0;
        clip.samples[i] = (phase - std::floor(phase)) < 0.5 ? 0.5f : -0.5f;
    }
    int crossings = 0;
    for (std::size_t i = 1; i < clip.samples.size(); ++i)
        crossings += clip.samples[i - 1] * clip.samples[i] < 0.0f;
    // 100 periods, two edges each, minus the final edge that would land
    // exactly one sample past the end.
    CHECK(crossings == 199);

    const auto feat = dsp::handcrafted(clip, dsp::DspConfig{});
    const double direct_rate = static_cast<double>(crossings) / (clip.samples.size() - 1);
    CHECK(feat.values[80] == doctest::Approx(direct_rate).epsilon(0.05));
}

TEST_CASE("too short for a single frame is an error") {
    audio::AudioClip clip;
    clip.sample_rate_hz = 16000;
    clip.samples.assign(100, 0.1f);
    CHECK_THROWS_AS(dsp::handcrafted(clip, dsp::DspConfig{}), dsp::ClipTooShort);
}

TEST_CASE("patch and matrix round trip") {
    const dsp::DspConfig cfg;
    const auto patch = dsp::mel_project(dsp::stft_magnitude(tone(700.0, 2.0), cfg), cfg);
    const auto back = dsp::mat_to_patch(dsp::patch_to_mat(patch));
    CHECK(back.n_mels == patch.n_mels);
    CHECK(back.n_frames == patch.n_frames);
    for (std::size_t i = 0; i < patch.values.size(); ++i)
        CHECK(back.values[i] ==
              doctest::Approx(patch.values[i]).epsilon(1e-6));  // float32 storage
}

TEST_CASE("log-mel output matches the stored golden patch") {
    const auto golden_path = data_dir() / "golden_logmel.cmel";
    REQUIRE_MESSAGE(std::filesystem::exists(golden_path),
                    "golden vector missing; regenerate with tools/make_golden");
    const auto golden = io::read_mat_file(golden_path);

    // The fixture clip: two tones plus a linear ramp, fully deterministic.
    audio::AudioClip clip;
    clip.sample_rate_hz = 16000;
    clip.samples.resize(32000);
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const double t = static_cast<double>(i) / 16000.0;
        clip.samples[i] = static_cast<float>(0.4 * std::sin(2.0 * std::numbers::pi * 440.0 * t) +
                                             0.2 * std::sin(2.0 * std::numbers::pi * 3000.0 * t) +
                                             0.1 * (t / 2.0));
    }
    const dsp::DspConfig cfg;
    const auto patch = dsp::mel_project(dsp::stft_magnitude(clip, cfg), cfg);
    REQUIRE(golden.rows == patch.n_mels);
    REQUIRE(golden.cols == static_cast<std::uint32_t>(patch.n_frames));
    for (std::size_t i = 0; i < patch.values.size(); ++i)
        CHECK(static_cast<float>(patch.values[i]) ==
              doctest::Approx(golden.values[i]).epsilon(1e-5));
}
