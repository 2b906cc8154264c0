// Microbenchmarks for the hot paths: FFT, the STFT + mel front end, one
// SGD step on the production architecture, and ROC construction.
#include <benchmark/benchmark.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <utility>
#include <vector>

#include "cac/dsp.hpp"
#include "cac/eval.hpp"
#include "cac/fft.hpp"
#include "cac/nn.hpp"
#include "cac/rng.hpp"

namespace {

cac::audio::AudioClip two_second_clip() {
    cac::audio::AudioClip clip;
    clip.sample_rate_hz = 16000;
    clip.samples.resize(32000);
    cac::Rng rng(99);
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const double t = static_cast<double>(i) / 16000.0;
        clip.samples[i] = static_cast<float>(0.4 * std::sin(2.0 * std::numbers::pi * 440.0 * t) +
                                             0.2 * rng.uniform(-1.0, 1.0));
    }
    return clip;
}

void BM_Fft512(benchmark::State& state) {
    cac::Rng rng(1);
    std::vector<double> frame(512);
    for (auto& v : frame) v = rng.uniform(-1.0, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cac::dsp::fft_real(frame, 512));
    }
}
BENCHMARK(BM_Fft512);

void BM_Stft2s(benchmark::State& state) {
    const auto clip = two_second_clip();
    const cac::dsp::DspConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(cac::dsp::stft_magnitude(clip, cfg));
    }
}
BENCHMARK(BM_Stft2s);

void BM_MelProject(benchmark::State& state) {
    const auto clip = two_second_clip();
    const cac::dsp::DspConfig cfg;
    const cac::dsp::MelFilterbank fb(cfg);
    const auto spec = cac::dsp::stft_magnitude(clip, cfg);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fb.apply(spec));
    }
}
BENCHMARK(BM_MelProject);

void BM_Handcrafted(benchmark::State& state) {
    const auto clip = two_second_clip();
    const cac::dsp::DspConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(cac::dsp::handcrafted(clip, cfg));
    }
}
BENCHMARK(BM_Handcrafted);

void BM_TrainStep(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0));
    cac::nn::ConvNetF net("conv16-pool-conv32-pool-conv64-gap-dense64-dropout0.5-dense2", 64,
                          201, 3);
    cac::Rng rng(4);
    std::vector<float> inputs(static_cast<std::size_t>(batch) * 64 * 201);
    for (auto& v : inputs) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    std::vector<int> labels(static_cast<std::size_t>(batch));
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(batch));
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = cac::derive_seed(5, i);
    for (auto _ : state) {
        benchmark::DoNotOptimize(net.loss_and_grad(inputs, labels, 0.2, seeds));
        net.sgd_step(0.01);
    }
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(32);

void BM_Roc(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    cac::Rng rng(6);
    std::vector<std::pair<double, int>> scored(n);
    for (auto& [s, y] : scored) {
        s = rng.uniform();
        y = rng.bernoulli(0.5) ? 1 : 0;
    }
    scored[0].second = 1;
    scored[1].second = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(cac::eval::roc(scored));
    }
}
BENCHMARK(BM_Roc)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
