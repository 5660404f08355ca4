#pragma once

#include "fibershape/constellation.hpp"

#include <complex>
#include <span>
#include <vector>

namespace fibershape {

/// Two equal-length complex sample streams (X and Y polarization).
/// Amplitudes are √W when the waveform is at a launch power, otherwise in
/// normalized symbol units.
template <typename T>
struct DualPolWaveform {
    std::vector<std::complex<T>> x;
    std::vector<std::complex<T>> y;
    double sample_rate = 0.0;

    std::size_t size() const { return x.size(); }
    /// Mean of |x|² + |y|² over samples.
    double mean_power() const;
    /// Σ |x|² + |y|².
    double total_energy() const;
    bool all_finite() const;
};

/// Time-domain root-raised-cosine design, odd length span*sps+1, unit energy.
struct RrcFilter {
    std::vector<double> taps;
    double rolloff = 0.0;
    int sps = 0;
    int span_symbols = 0;

    std::size_t delay() const { return taps.size() / 2; }
};

RrcFilter design_rrc(double rolloff, int sps, int span_symbols = 128);

/// Periodic RRC transfer function on an n-sample DFT grid (real, even in
/// frequency, unit-energy impulse response). This is the span -> infinity limit
/// of design_rrc wrapped onto the block; modulate and the matched filter use it
/// so that the cascade is exactly Nyquist on a circular block.
std::vector<double> rrc_block_response(double rolloff, int sps, std::size_t n_samples);

/// Zero-stuffing by sps followed by circular RRC filtering. X is built from
/// (re X, im X), Y from (re Y, im Y). Output is scaled by √sps so a block of
/// unit-energy symbols has unit mean dual-pol sample power.
template <typename T>
DualPolWaveform<T> modulate(std::span<const Point4> symbols, const RrcFilter& filter, double symbol_rate);

/// Circular RRC matched filter, sampled at the symbol instants (k*sps) and
/// scaled by 1/√sps. Inverse of modulate on a back-to-back link.
template <typename T>
std::vector<Point4> matched_filter_downsample(const DualPolWaveform<T>& w, const RrcFilter& filter,
                                              std::size_t n_symbols);

/// Adjoint of modulate under the real inner product: maps a waveform gradient
/// (∂L/∂Re + j∂L/∂Im per sample) to per-symbol gradients.
template <typename T>
std::vector<Point4> modulate_adjoint(const DualPolWaveform<T>& grad, const RrcFilter& filter);

/// Adjoint of matched_filter_downsample.
template <typename T>
DualPolWaveform<T> matched_filter_adjoint(std::span<const Point4> grad, const RrcFilter& filter,
                                          std::size_t n_samples, double sample_rate);

/// Scale so that mean(|x|²+|y|²) equals the power in watts for power_dbm.
template <typename T>
DualPolWaveform<T> set_launch_power(const DualPolWaveform<T>& w, double power_dbm);

/// Factor by which set_launch_power scales w.
template <typename T>
double launch_scale(const DualPolWaveform<T>& w, double power_dbm);

/// Linear (dispersion-only) propagation over `length` metres:
/// frequency-domain multiplication by exp(+j (β₂/2) ω² L).
template <typename T>
DualPolWaveform<T> propagate_linear(const DualPolWaveform<T>& w, double beta2, double length);

/// Chromatic dispersion compensation, exact inverse of propagate_linear.
template <typename T>
DualPolWaveform<T> cd_compensate(const DualPolWaveform<T>& w, double beta2, double length);

/// Sample-wise multiplication by exp(j 2π Δf n / Fs).
template <typename T>
DualPolWaveform<T> frequency_shift(const DualPolWaveform<T>& w, double delta_f);

/// Symbols to discard at each end of a circular block: filter span plus the
/// dispersion memory ⌈2π|β₂|L B²⌉ with B the symbol rate.
std::size_t guard_symbols(int filter_span_symbols, double beta2, double length, double symbol_rate);

/// In-place helper shared with the channel: multiply the spectrum of both
/// polarizations by exp(j phase_per_rad2 * ω²).
template <typename T>
void apply_quadratic_phase(DualPolWaveform<T>& w, double phase_per_rad2);

}  // namespace fibershape
