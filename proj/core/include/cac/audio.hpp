// WAV ingestion and band-limited resampling.
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace cac::audio {

inline constexpr int kCanonicalRateHz = 16000;

// Decoded mono audio. Samples are finite and clamped to [-1, 1].
struct AudioClip {
    std::vector<float> samples;
    int sample_rate_hz = 0;
    std::string source_id;

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate_hz;
    }
};

struct MalformedContainer : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnsupportedEncoding : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyAudio : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parses a RIFF/WAVE container. Accepts PCM 8/16/24-bit and 32-bit IEEE
// float, 1 or 2 channels, any rate. Stereo is downmixed by channel
// averaging. Integer PCM is scaled by the type's maximum positive
// magnitude (32767 for 16-bit); the negative rail is clamped to -1.
AudioClip decode_wav(const std::uint8_t* data, std::size_t size, std::string source_id = {});
AudioClip decode_wav(const std::vector<std::uint8_t>& bytes, std::string source_id = {});
AudioClip load_wav(const std::filesystem::path& path);

// Serializes a mono clip as 16-bit PCM.
std::vector<std::uint8_t> encode_wav16(const AudioClip& clip);
void write_wav16(const std::filesystem::path& path, const AudioClip& clip);

// Windowed-sinc resampler (Kaiser beta = 8.6, 64 zero crossings, cutoff at
// the lower of the two Nyquist frequencies). Identity when the rate already
// matches. Output length is round(len * target / source), so duration is
// preserved within one sample period.
AudioClip resample(const AudioClip& clip, int target_hz);

// Resample to the canonical 16 kHz rate if needed.
AudioClip canonicalize(const AudioClip& clip, int target_hz = kCanonicalRateHz);

}  // namespace cac::audio
