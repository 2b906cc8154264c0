// Regenerates the stored log-mel golden vector used by the dsp tests.
// Usage: make_golden <output.cmel>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <numbers>

#include "cac/audio.hpp"
#include "cac/dsp.hpp"
#include "cac/matrix_io.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_golden <output.cmel>\n";
        return 2;
    }
    cac::audio::AudioClip clip;
    clip.sample_rate_hz = 16000;
    clip.samples.resize(32000);
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const double t = static_cast<double>(i) / 16000.0;
        clip.samples[i] = static_cast<float>(0.4 * std::sin(2.0 * std::numbers::pi * 440.0 * t) +
                                             0.2 * std::sin(2.0 * std::numbers::pi * 3000.0 * t) +
                                             0.1 * (t / 2.0));
    }
    const cac::dsp::DspConfig cfg;
    const auto patch = cac::dsp::mel_project(cac::dsp::stft_magnitude(clip, cfg), cfg);
    cac::io::write_mat_file(argv[1], cac::dsp::patch_to_mat(patch));
    std::cout << "wrote " << argv[1] << " (" << patch.n_mels << " x " << patch.n_frames << ")\n";
    return 0;
}
