#pragma once

#include "fibershape/dsp.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace fibershape {

/// Fiber and amplifier parameters, SI units.
struct FiberLink {
    double beta2 = -21.67e-27;        // s²/m   (-21.67 ps²/km)
    double gamma = 1.2e-3;            // 1/(W m) (1.2 1/W/km)
    double alpha = 0.2 * 0.2302585092994046 / 1e3;  // 1/m power attenuation (0.2 dB/km)
    double span_length = 80e3;        // m
    int n_spans = 50;
    double nf_db = 5.0;               // -inf disables ASE
    int steps_per_span = 200;
    double center_wavelength = 1550e-9;  // m

    static FiberLink standard(int n_spans);
    void validate() const;

    double total_length() const { return span_length * n_spans; }
    /// Amplifier gain that restores one span's loss, e^{α L}.
    double span_gain() const;
    bool ase_enabled() const { return nf_db > -std::numeric_limits<double>::infinity(); }
};

/// WDM grid. Channel i sits at (i - (n-1)/2) * spacing.
struct WdmConfig {
    int n_channels = 5;
    double symbol_rate = 50e9;
    double spacing = 51.5e9;
    int sps = 16;
    double rolloff = 0.01;
    std::vector<double> per_channel_power_dbm;

    double sample_rate() const { return symbol_rate * sps; }
    double channel_offset(int index) const { return (index - (n_channels - 1) / 2.0) * spacing; }
    /// Throws InvalidInput when channels overlap or the grid does not fit in
    /// the simulation bandwidth.
    void validate() const;
};

/// channel_offset rounded to the FFT bin grid of an n-sample block, so the
/// circular shift stays periodic and does not leak neighbours into every band.
double wdm_offset(const WdmConfig& cfg, int index, std::size_t n_samples);

/// Per-polarization ASE variance added by one amplifier:
/// (G - 1) h ν n_sp F_s with n_sp = F/2.
double ase_variance_per_pol(const FiberLink& link, double sample_rate);

/// Fields recorded by the forward pass for ssfm_span_backward: the input of
/// every nonlinear sub-step and the per-step coefficients.
template <typename T>
struct SsfmTape {
    std::vector<std::vector<std::complex<T>>> nl_input_x;
    std::vector<std::vector<std::complex<T>>> nl_input_y;
    std::vector<double> nl_coeff;   // (8/9) γ e^{-α z_s} L_eff(h)
    double beta2 = 0.0;
    double step = 0.0;
    double sample_rate = 0.0;
    std::size_t n_samples = 0;
};

/// One fiber span by symmetric split-step Fourier on the loss-normalized
/// field: D(h/2) N(h) D(h/2) per step, where N applies the phase
/// (8/9) γ e^{-α z} L_eff(h) (|A_x|² + |A_y|²). Both sub-steps are unitary.
/// Throws NumericalError naming the step when the field becomes non-finite.
template <typename T>
void ssfm_span(DualPolWaveform<T>& w, const FiberLink& link, SsfmTape<T>* tape = nullptr);

/// Reverse-mode gradient of ssfm_span. Gradients use the convention
/// g = ∂L/∂Re + j ∂L/∂Im per sample.
template <typename T>
DualPolWaveform<T> ssfm_span_backward(const SsfmTape<T>& tape, const DualPolWaveform<T>& output_gradient);

/// Adds circular complex Gaussian ASE to both polarizations. The signal gain
/// is identity because the field is loss normalized.
template <typename T>
void edfa(DualPolWaveform<T>& w, const FiberLink& link, std::mt19937_64& rng);

/// n_spans × (span, amplifier). Span s draws its noise from substream
/// (seed, s) so results are a pure function of the seed.
template <typename T>
DualPolWaveform<T> propagate_link(const DualPolWaveform<T>& w, const FiberLink& link, std::uint64_t seed);

/// Differentiable variant: records one tape per span. Noise is an additive
/// constant for the backward pass.
template <typename T>
struct LinkTape {
    std::vector<SsfmTape<T>> spans;
};

template <typename T>
DualPolWaveform<T> propagate_link_recorded(const DualPolWaveform<T>& w, const FiberLink& link,
                                           std::uint64_t seed, LinkTape<T>& tape);

template <typename T>
DualPolWaveform<T> propagate_link_backward(const LinkTape<T>& tape, const DualPolWaveform<T>& output_gradient);

/// Σ_i frequency_shift(w_i, offset_i), offsets rounded to the FFT bin grid of
/// the block. All inputs share length and sample rate.
template <typename T>
DualPolWaveform<T> wdm_mux(std::span<const DualPolWaveform<T>> channels, const WdmConfig& cfg);

/// Shifts channel `index` to baseband; the matched filter does the selection.
template <typename T>
DualPolWaveform<T> wdm_demux(const DualPolWaveform<T>& w, const WdmConfig& cfg, int index);

}  // namespace fibershape
