#include "cac/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace cac::audio {

namespace {

std::uint16_t read_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float clamp_unit(double v) {
    if (!std::isfinite(v)) return 0.0f;
    return static_cast<float>(std::clamp(v, -1.0, 1.0));
}

struct FmtChunk {
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t block_align = 0;
    std::uint16_t bits_per_sample = 0;
};

double decode_sample(const std::uint8_t* p, const FmtChunk& fmt) {
    switch (fmt.bits_per_sample) {
        case 8:  // unsigned, midpoint 128
            return (static_cast<int>(p[0]) - 128) / 127.0;
        case 16: {
            const auto v = static_cast<std::int16_t>(read_u16(p));
            return v / 32767.0;
        }
        case 24: {
            std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
            if (v & 0x800000) v |= ~0xffffff;  // sign extend
            return v / 8388607.0;
        }
        case 32: {  // IEEE float, fmt.format == 3
            float f;
            const std::uint32_t raw = read_u32(p);
            std::memcpy(&f, &raw, sizeof f);
            return f;
        }
        default:
            return 0.0;
    }
}

}  // namespace

AudioClip decode_wav(const std::uint8_t* data, std::size_t size, std::string source_id) {
    if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0) {
        throw MalformedContainer("not a RIFF/WAVE container: " + source_id);
    }

    FmtChunk fmt;
    bool have_fmt = false;
    const std::uint8_t* payload = nullptr;
    std::size_t payload_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= size) {
        const std::uint8_t* hdr = data + pos;
        const std::uint32_t chunk_size = read_u32(hdr + 4);
        pos += 8;
        if (pos + chunk_size > size) {
            throw MalformedContainer("truncated chunk in " + source_id);
        }
        if (std::memcmp(hdr, "fmt ", 4) == 0) {
            if (chunk_size < 16) throw MalformedContainer("fmt chunk too small: " + source_id);
            fmt.format = read_u16(data + pos);
            fmt.channels = read_u16(data + pos + 2);
            fmt.sample_rate = read_u32(data + pos + 4);
            fmt.block_align = read_u16(data + pos + 12);
            fmt.bits_per_sample = read_u16(data + pos + 14);
            have_fmt = true;
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            payload = data + pos;
            payload_size = chunk_size;
        }
        pos += chunk_size + (chunk_size & 1);  // chunks are word-aligned
    }

    if (!have_fmt || payload == nullptr) {
        throw MalformedContainer("missing fmt or data chunk: " + source_id);
    }
    if (fmt.format != 1 && fmt.format != 3) {
        throw UnsupportedEncoding("unsupported WAVE format tag " + std::to_string(fmt.format) +
                                  " (only PCM and IEEE float): " + source_id);
    }
    const bool pcm_ok = fmt.format == 1 && (fmt.bits_per_sample == 8 || fmt.bits_per_sample == 16 ||
                                            fmt.bits_per_sample == 24);
    const bool float_ok = fmt.format == 3 && fmt.bits_per_sample == 32;
    if (!pcm_ok && !float_ok) {
        throw UnsupportedEncoding("unsupported sample width " + std::to_string(fmt.bits_per_sample) +
                                  " for format " + std::to_string(fmt.format) + ": " + source_id);
    }
    if (fmt.channels < 1 || fmt.channels > 2) {
        throw UnsupportedEncoding("unsupported channel count " + std::to_string(fmt.channels) + ": " +
                                  source_id);
    }
    if (fmt.sample_rate == 0) throw MalformedContainer("zero sample rate: " + source_id);

    const std::size_t bytes_per_sample = fmt.bits_per_sample / 8;
    const std::size_t frame_bytes =
        fmt.block_align != 0 ? fmt.block_align : bytes_per_sample * fmt.channels;
    if (frame_bytes < bytes_per_sample * fmt.channels) {
        throw MalformedContainer("block align smaller than frame: " + source_id);
    }
    const std::size_t n_frames = payload_size / frame_bytes;
    if (n_frames == 0) throw EmptyAudio("no audio frames: " + source_id);

    AudioClip clip;
    clip.sample_rate_hz = static_cast<int>(fmt.sample_rate);
    clip.source_id = std::move(source_id);
    clip.samples.resize(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
        const std::uint8_t* frame = payload + i * frame_bytes;
        double acc = 0.0;
        for (unsigned c = 0; c < fmt.channels; ++c) {
            acc += decode_sample(frame + c * bytes_per_sample, fmt);
        }
        clip.samples[i] = clamp_unit(acc / fmt.channels);
    }
    return clip;
}

AudioClip decode_wav(const std::vector<std::uint8_t>& bytes, std::string source_id) {
    return decode_wav(bytes.data(), bytes.size(), std::move(source_id));
}

AudioClip load_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MalformedContainer("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_wav(bytes, path.string());
}

std::vector<std::uint8_t> encode_wav16(const AudioClip& clip) {
    const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
    const std::uint32_t data_bytes = n * 2;
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);

    auto push_u32 = [&out](std::uint32_t v) {
        out.push_back(v & 0xff);
        out.push_back((v >> 8) & 0xff);
        out.push_back((v >> 16) & 0xff);
        out.push_back((v >> 24) & 0xff);
    };
    auto push_u16 = [&out](std::uint16_t v) {
        out.push_back(v & 0xff);
        out.push_back((v >> 8) & 0xff);
    };
    auto push_tag = [&out](const char* tag) { out.insert(out.end(), tag, tag + 4); };

    push_tag("RIFF");
    push_u32(36 + data_bytes);
    push_tag("WAVE");
    push_tag("fmt ");
    push_u32(16);
    push_u16(1);  // PCM
    push_u16(1);  // mono
    push_u32(static_cast<std::uint32_t>(clip.sample_rate_hz));
    push_u32(static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
    push_u16(2);
    push_u16(16);
    push_tag("data");
    push_u32(data_bytes);
    for (float s : clip.samples) {
        const double v = std::clamp(static_cast<double>(s), -1.0, 1.0);
        auto q = static_cast<std::int32_t>(std::llround(v * 32767.0));
        q = std::clamp(q, -32768, 32767);
        push_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
    return out;
}

void write_wav16(const std::filesystem::path& path, const AudioClip& clip) {
    const auto bytes = encode_wav16(clip);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

namespace {

// Zeroth-order modified Bessel function, power series.
double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    const double half_sq = x * x / 4.0;
    for (int k = 1; k < 64; ++k) {
        term *= half_sq / (k * k);
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum;
}

}  // namespace

AudioClip resample(const AudioClip& clip, int target_hz) {
    if (target_hz <= 0) throw std::invalid_argument("target rate must be positive");
    if (clip.sample_rate_hz <= 0) throw std::invalid_argument("clip has no sample rate");
    if (target_hz == clip.sample_rate_hz) return clip;

    constexpr double kKaiserBeta = 8.6;
    constexpr int kZeroCrossings = 64;

    const double ratio = static_cast<double>(target_hz) / clip.sample_rate_hz;
    // Cutoff (cycles per input sample): the lower Nyquist of the two rates.
    const double cutoff = 0.5 * std::min(1.0, ratio);
    const double half_width = kZeroCrossings / (2.0 * cutoff);
    const double i0_beta = bessel_i0(kKaiserBeta);

    const auto in_len = static_cast<std::int64_t>(clip.samples.size());
    const auto out_len = std::max<std::int64_t>(
        1, std::llround(static_cast<double>(in_len) * target_hz / clip.sample_rate_hz));

    AudioClip out;
    out.sample_rate_hz = target_hz;
    out.source_id = clip.source_id;
    out.samples.resize(static_cast<std::size_t>(out_len));

    for (std::int64_t j = 0; j < out_len; ++j) {
        const double t = static_cast<double>(j) / ratio;  // position in input samples
        const auto n0 = static_cast<std::int64_t>(std::ceil(t - half_width));
        const auto n1 = static_cast<std::int64_t>(std::floor(t + half_width));
        double acc = 0.0, norm = 0.0;
        for (std::int64_t n = n0; n <= n1; ++n) {
            const double d = t - static_cast<double>(n);
            const double x = d / half_width;
            if (x < -1.0 || x > 1.0) continue;
            const double window = bessel_i0(kKaiserBeta * std::sqrt(1.0 - x * x)) / i0_beta;
            const double arg = 2.0 * cutoff * d;
            const double sinc =
                arg == 0.0 ? 1.0 : std::sin(M_PI * arg) / (M_PI * arg);
            const double tap = 2.0 * cutoff * sinc * window;
            norm += tap;
            if (n >= 0 && n < in_len) acc += tap * clip.samples[static_cast<std::size_t>(n)];
        }
        out.samples[static_cast<std::size_t>(j)] = clamp_unit(norm != 0.0 ? acc / norm : 0.0);
    }
    return out;
}

AudioClip canonicalize(const AudioClip& clip, int target_hz) {
    return clip.sample_rate_hz == target_hz ? clip : resample(clip, target_hz);
}

}  // namespace cac::audio
