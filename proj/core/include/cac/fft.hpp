#pragma once

#include <complex>
#include <span>
#include <vector>

namespace cac::dsp {

// In-place iterative radix-2 FFT. Length must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a);

// FFT of a real signal, zero-padded or truncated to n_fft (power of two).
std::vector<std::complex<double>> fft_real(std::span<const double> x, std::size_t n_fft);

bool is_power_of_two(std::size_t n);

}  // namespace cac::dsp
