#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "cac/audio.hpp"
#include "cac/fft.hpp"
#include "doctest.h"

using namespace cac;

namespace {

void push_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
    v.push_back(x & 0xff);
    v.push_back((x >> 8) & 0xff);
}

void push_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(x & 0xff);
    v.push_back((x >> 8) & 0xff);
    v.push_back((x >> 16) & 0xff);
    v.push_back((x >> 24) & 0xff);
}

// Hand-rolled writer so decode_wav is checked against independently composed
// bytes rather than against encode_wav16.
std::vector<std::uint8_t> make_wav16(const std::vector<std::int16_t>& samples, int rate,
                                     int channels) {
    std::vector<std::uint8_t> v;
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    v.insert(v.end(), {'R', 'I', 'F', 'F'});
    push_u32(v, 36 + data_bytes);
    v.insert(v.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    push_u32(v, 16);
    push_u16(v, 1);
    push_u16(v, static_cast<std::uint16_t>(channels));
    push_u32(v, static_cast<std::uint32_t>(rate));
    push_u32(v, static_cast<std::uint32_t>(rate * channels * 2));
    push_u16(v, static_cast<std::uint16_t>(channels * 2));
    push_u16(v, 16);
    v.insert(v.end(), {'d', 'a', 't', 'a'});
    push_u32(v, data_bytes);
    for (const auto s : samples) push_u16(v, static_cast<std::uint16_t>(s));
    return v;
}

std::vector<std::int16_t> sine16(double freq, int rate, double seconds, double amp) {
    const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
    std::vector<std::int16_t> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        s[i] = static_cast<std::int16_t>(
            std::lround(amp * 32767.0 * std::sin(2.0 * std::numbers::pi * freq * t)));
    }
    return s;
}

int fft_peak_bin(const audio::AudioClip& clip, std::size_t n_fft) {
    std::vector<double> x(n_fft, 0.0);
    const std::size_t off = clip.samples.size() > n_fft ? (clip.samples.size() - n_fft) / 2 : 0;
    for (std::size_t i = 0; i < n_fft && off + i < clip.samples.size(); ++i)
        x[i] = clip.samples[off + i];
    const auto spec = dsp::fft_real(x, n_fft);
    int best = 0;
    double best_mag = -1.0;
    for (std::size_t k = 1; k < n_fft / 2; ++k) {
        const double m = std::abs(spec[k]);
        if (m > best_mag) {
            best_mag = m;
            best = static_cast<int>(k);
        }
    }
    return best;
}

}  // namespace

TEST_CASE("16-bit full-scale sample decodes to about 1") {
    const auto clip = audio::decode_wav(make_wav16({32767}, 16000, 1));
    REQUIRE(clip.samples.size() == 1);
    CHECK(clip.sample_rate_hz == 16000);
    CHECK(clip.samples[0] == doctest::Approx(1.0).epsilon(1.0 / 32768));
}

TEST_CASE("stereo downmix averages the channels") {
    const auto clip = audio::decode_wav(make_wav16({32767, 0}, 16000, 2));
    REQUIRE(clip.samples.size() == 1);
    CHECK(clip.samples[0] == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("44.1 kHz sine round-trips through the container") {
    const auto raw = sine16(440.0, 44100, 1.0, 0.8);
    const auto clip = audio::decode_wav(make_wav16(raw, 44100, 1));
    REQUIRE(clip.samples.size() == 44100);
    CHECK(clip.sample_rate_hz == 44100);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        CHECK(std::abs(clip.samples[i] - raw[i] / 32767.0) <= 1.0 / 32768);
    }
}

TEST_CASE("encode then decode reproduces samples within quantization") {
    audio::AudioClip clip;
    clip.sample_rate_hz = 16000;
    for (int i = 0; i < 1000; ++i)
        clip.samples.push_back(static_cast<float>(0.9 * std::sin(0.01 * i) * std::cos(0.13 * i)));
    const auto round = audio::decode_wav(audio::encode_wav16(clip));
    REQUIRE(round.samples.size() == clip.samples.size());
    for (std::size_t i = 0; i < clip.samples.size(); ++i)
        CHECK(std::abs(round.samples[i] - clip.samples[i]) <= 1.0 / 32768);
}

TEST_CASE("downmix is the mean of the separately decoded channels") {
    const auto left = sine16(300.0, 8000, 0.1, 0.6);
    const auto right = sine16(770.0, 8000, 0.1, 0.3);
    std::vector<std::int16_t> inter;
    for (std::size_t i = 0; i < left.size(); ++i) {
        inter.push_back(left[i]);
        inter.push_back(right[i]);
    }
    const auto stereo = audio::decode_wav(make_wav16(inter, 8000, 2));
    const auto mono_l = audio::decode_wav(make_wav16(left, 8000, 1));
    const auto mono_r = audio::decode_wav(make_wav16(right, 8000, 1));
    REQUIRE(stereo.samples.size() == mono_l.samples.size());
    for (std::size_t i = 0; i < stereo.samples.size(); ++i) {
        const double want = (mono_l.samples[i] + mono_r.samples[i]) / 2.0;
        CHECK(stereo.samples[i] == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("resample at the native rate is the identity") {
    const auto clip = audio::decode_wav(make_wav16(sine16(500.0, 16000, 0.25, 0.5), 16000, 1));
    const auto same = audio::resample(clip, 16000);
    CHECK(same.samples == clip.samples);
}

TEST_CASE("44.1 kHz tone keeps its frequency at 16 kHz") {
    const auto clip = audio::decode_wav(make_wav16(sine16(440.0, 44100, 1.0, 0.8), 44100, 1));
    const auto down = audio::resample(clip, 16000);
    CHECK(down.sample_rate_hz == 16000);
    const std::size_t n_fft = 8192;
    const int peak = fft_peak_bin(down, n_fft);
    const double want_bin = 440.0 * n_fft / 16000.0;
    CHECK(std::abs(peak - want_bin) <= 1.0);
}

TEST_CASE("48 kHz second becomes 16000 samples give or take one") {
    const auto clip = audio::decode_wav(make_wav16(sine16(1000.0, 48000, 1.0, 0.5), 48000, 1));
    const auto down = audio::resample(clip, 16000);
    CHECK(std::abs(static_cast<long long>(down.samples.size()) - 16000LL) <= 1);
}

TEST_CASE("upsampling preserves the tone too") {
    const auto clip = audio::decode_wav(make_wav16(sine16(440.0, 8000, 1.0, 0.7), 8000, 1));
    const auto up = audio::resample(clip, 16000);
    const std::size_t n_fft = 8192;
    const double want_bin = 440.0 * n_fft / 16000.0;
    CHECK(std::abs(fft_peak_bin(up, n_fft) - want_bin) <= 1.0);
}

TEST_CASE("malformed containers are rejected") {
    std::vector<std::uint8_t> junk{'J', 'U', 'N', 'K', 0, 0, 0, 0};
    CHECK_THROWS_AS(audio::decode_wav(junk), audio::MalformedContainer);
    auto truncated = make_wav16(sine16(440.0, 16000, 0.1, 0.5), 16000, 1);
    truncated.resize(20);
    CHECK_THROWS_AS(audio::decode_wav(truncated), audio::MalformedContainer);
}

TEST_CASE("compressed format tags are rejected") {
    auto v = make_wav16({0, 0, 0, 0}, 16000, 1);
    v[20] = 2;  // format tag: ADPCM
    CHECK_THROWS_AS(audio::decode_wav(v), audio::UnsupportedEncoding);
}

TEST_CASE("zero frames is an error") {
    const auto v = make_wav16({}, 16000, 1);
    CHECK_THROWS_AS(audio::decode_wav(v), audio::EmptyAudio);
}

TEST_CASE("canonicalize lands on 16 kHz") {
    const auto clip = audio::decode_wav(make_wav16(sine16(440.0, 22050, 0.5, 0.5), 22050, 1));
    const auto canon = audio::canonicalize(clip);
    CHECK(canon.sample_rate_hz == 16000);
    CHECK(std::abs(canon.duration_s() - 0.5) < 1e-3);
}
