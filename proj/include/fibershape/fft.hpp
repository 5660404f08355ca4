#pragma once

#include <complex>
#include <span>

namespace fibershape {

/// In-place complex DFT, X[k] = sum_n x[n] exp(-j 2 pi k n / N).
/// FFTW plans are created once per (length, direction, precision) and shared
/// behind a mutex; execution uses the new-array interface and is thread safe.
void fft_forward(std::span<std::complex<double>> data);
void fft_forward(std::span<std::complex<float>> data);

/// In-place inverse DFT including the 1/N factor.
void fft_inverse(std::span<std::complex<double>> data);
void fft_inverse(std::span<std::complex<float>> data);

/// Angular frequency of DFT bin k for a block of n samples at sample_rate,
/// numpy fftfreq ordering (negative frequencies in the upper half).
double bin_angular_frequency(std::size_t k, std::size_t n, double sample_rate);

}  // namespace fibershape
