#include "fibershape/dsp.hpp"

#include "fibershape/error.hpp"
#include "fibershape/fft.hpp"
#include "fibershape/units.hpp"

#include <cmath>
#include <numbers>

namespace fibershape {
namespace {

using std::numbers::pi;

double rrc_tap(double t, double beta) {
    // t in symbol periods
    if (std::abs(t) < 1e-12) return 1.0 - beta + 4.0 * beta / pi;
    if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-9) {
        return beta / std::sqrt(2.0) *
               ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
    }
    const double num = std::sin(pi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(pi * t * (1.0 + beta));
    const double den = pi * t * (1.0 - 16.0 * beta * beta * t * t);
    return num / den;
}

// Raised-cosine spectrum, f in units of the symbol rate, peak 1.
double raised_cosine(double f, double beta) {
    const double af = std::abs(f);
    const double lo = (1.0 - beta) / 2.0;
    const double hi = (1.0 + beta) / 2.0;
    if (af <= lo) return 1.0;
    if (af > hi) return 0.0;
    return 0.5 * (1.0 + std::cos(pi / beta * (af - lo)));
}

template <typename T>
void check_shape(const DualPolWaveform<T>& w) {
    require(w.x.size() == w.y.size(), "waveform: X and Y must have equal length");
    require(w.sample_rate > 0.0, "waveform: sample rate must be positive");
}

template <typename T>
void filter_block(std::vector<std::complex<T>>& v, const std::vector<double>& response, double gain) {
    fft_forward(std::span(v));
    for (std::size_t k = 0; k < v.size(); ++k) v[k] *= static_cast<T>(response[k] * gain);
    fft_inverse(std::span(v));
}

}  // namespace

template <typename T>
double DualPolWaveform<T>::mean_power() const {
    if (x.empty()) return 0.0;
    return total_energy() / static_cast<double>(x.size());
}

template <typename T>
double DualPolWaveform<T>::total_energy() const {
    double e = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) e += std::norm(x[i]) + std::norm(y[i]);
    return e;
}

template <typename T>
bool DualPolWaveform<T>::all_finite() const {
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i].real()) || !std::isfinite(x[i].imag()) || !std::isfinite(y[i].real()) ||
            !std::isfinite(y[i].imag())) {
            return false;
        }
    }
    return true;
}

RrcFilter design_rrc(double rolloff, int sps, int span_symbols) {
    require(rolloff > 0.0 && rolloff <= 1.0, "design_rrc: rolloff must be in (0, 1]");
    require(sps >= 2, "design_rrc: sps must be >= 2");
    require(span_symbols >= 4, "design_rrc: span must be >= 4 symbols");
    RrcFilter f;
    f.rolloff = rolloff;
    f.sps = sps;
    f.span_symbols = span_symbols;
    const int half = span_symbols * sps / 2;
    f.taps.resize(static_cast<std::size_t>(2 * half + 1));
    double e = 0.0;
    for (int n = -half; n <= half; ++n) {
        const double v = rrc_tap(static_cast<double>(n) / sps, rolloff);
        f.taps[static_cast<std::size_t>(n + half)] = v;
        e += v * v;
    }
    const double s = 1.0 / std::sqrt(e);
    for (auto& v : f.taps) v *= s;
    // exact even symmetry
    for (std::size_t k = 0; k < f.taps.size() / 2; ++k) f.taps[f.taps.size() - 1 - k] = f.taps[k];
    return f;
}

std::vector<double> rrc_block_response(double rolloff, int sps, std::size_t n_samples) {
    require(n_samples > 0, "rrc_block_response: empty block");
    std::vector<double> h(n_samples);
    const double n = static_cast<double>(n_samples);
    double e = 0.0;
    for (std::size_t k = 0; k < n_samples; ++k) {
        const double kk = (2 * k < n_samples) ? static_cast<double>(k) : static_cast<double>(k) - n;
        const double f = kk * sps / n;  // in units of the symbol rate
        h[k] = std::sqrt(raised_cosine(f, rolloff));
        e += h[k] * h[k];
    }
    // unit energy impulse response: (1/N) Σ|H|² = 1
    const double s = std::sqrt(n / e);
    for (auto& v : h) v *= s;
    return h;
}

template <typename T>
DualPolWaveform<T> modulate(std::span<const Point4> symbols, const RrcFilter& filter, double symbol_rate) {
    require(!symbols.empty(), "modulate: no symbols");
    require(symbol_rate > 0.0, "modulate: symbol rate must be positive");
    const auto sps = static_cast<std::size_t>(filter.sps);
    const std::size_t n = symbols.size() * sps;
    DualPolWaveform<T> w;
    w.sample_rate = symbol_rate * static_cast<double>(filter.sps);
    w.x.assign(n, {});
    w.y.assign(n, {});
    for (std::size_t k = 0; k < symbols.size(); ++k) {
        const auto& s = symbols[k];
        w.x[k * sps] = {static_cast<T>(s[0]), static_cast<T>(s[1])};
        w.y[k * sps] = {static_cast<T>(s[2]), static_cast<T>(s[3])};
    }
    const auto h = rrc_block_response(filter.rolloff, filter.sps, n);
    const double gain = std::sqrt(static_cast<double>(filter.sps));
    filter_block(w.x, h, gain);
    filter_block(w.y, h, gain);
    return w;
}

template <typename T>
std::vector<Point4> matched_filter_downsample(const DualPolWaveform<T>& w, const RrcFilter& filter,
                                              std::size_t n_symbols) {
    check_shape(w);
    const auto sps = static_cast<std::size_t>(filter.sps);
    require(n_symbols > 0, "matched_filter_downsample: n_symbols must be positive");
    require(w.size() >= n_symbols * sps, "matched_filter_downsample: waveform has " + std::to_string(w.size()) +
                                             " samples, need " + std::to_string(n_symbols * sps));
    const auto h = rrc_block_response(filter.rolloff, filter.sps, w.size());
    const double gain = 1.0 / std::sqrt(static_cast<double>(filter.sps));
    auto x = w.x;
    auto y = w.y;
    filter_block(x, h, gain);
    filter_block(y, h, gain);
    std::vector<Point4> out(n_symbols);
    for (std::size_t k = 0; k < n_symbols; ++k) {
        const auto& a = x[k * sps];
        const auto& b = y[k * sps];
        out[k] = {a.real(), a.imag(), b.real(), b.imag()};
    }
    return out;
}

template <typename T>
std::vector<Point4> modulate_adjoint(const DualPolWaveform<T>& grad, const RrcFilter& filter) {
    const auto sps = static_cast<std::size_t>(filter.sps);
    require(grad.size() % sps == 0, "modulate_adjoint: sample count must be a multiple of sps");
    auto out = matched_filter_downsample(grad, filter, grad.size() / sps);
    for (auto& p : out) {
        for (double& v : p) v *= static_cast<double>(filter.sps);
    }
    return out;
}

template <typename T>
DualPolWaveform<T> matched_filter_adjoint(std::span<const Point4> grad, const RrcFilter& filter,
                                          std::size_t n_samples, double sample_rate) {
    const auto sps = static_cast<std::size_t>(filter.sps);
    require(n_samples >= grad.size() * sps, "matched_filter_adjoint: block too short");
    DualPolWaveform<T> w;
    w.sample_rate = sample_rate;
    w.x.assign(n_samples, {});
    w.y.assign(n_samples, {});
    for (std::size_t k = 0; k < grad.size(); ++k) {
        const auto& s = grad[k];
        w.x[k * sps] = {static_cast<T>(s[0]), static_cast<T>(s[1])};
        w.y[k * sps] = {static_cast<T>(s[2]), static_cast<T>(s[3])};
    }
    const auto h = rrc_block_response(filter.rolloff, filter.sps, n_samples);
    const double gain = 1.0 / std::sqrt(static_cast<double>(filter.sps));
    filter_block(w.x, h, gain);
    filter_block(w.y, h, gain);
    return w;
}

template <typename T>
double launch_scale(const DualPolWaveform<T>& w, double power_dbm) {
    check_shape(w);
    const double p = w.mean_power();
    require(p > 0.0 && std::isfinite(p), "set_launch_power: waveform has zero power");
    return std::sqrt(units::dbm_to_watt(power_dbm) / p);
}

template <typename T>
DualPolWaveform<T> set_launch_power(const DualPolWaveform<T>& w, double power_dbm) {
    const auto s = static_cast<T>(launch_scale(w, power_dbm));
    DualPolWaveform<T> out = w;
    for (auto& v : out.x) v *= s;
    for (auto& v : out.y) v *= s;
    return out;
}

template <typename T>
void apply_quadratic_phase(DualPolWaveform<T>& w, double phase_per_rad2) {
    check_shape(w);
    if (phase_per_rad2 == 0.0 || w.x.empty()) return;
    const std::size_t n = w.size();
    fft_forward(std::span(w.x));
    fft_forward(std::span(w.y));
    for (std::size_t k = 0; k < n; ++k) {
        const double om = bin_angular_frequency(k, n, w.sample_rate);
        const double ph = phase_per_rad2 * om * om;
        const std::complex<T> rot(static_cast<T>(std::cos(ph)), static_cast<T>(std::sin(ph)));
        w.x[k] *= rot;
        w.y[k] *= rot;
    }
    fft_inverse(std::span(w.x));
    fft_inverse(std::span(w.y));
}

template <typename T>
DualPolWaveform<T> propagate_linear(const DualPolWaveform<T>& w, double beta2, double length) {
    DualPolWaveform<T> out = w;
    apply_quadratic_phase(out, 0.5 * beta2 * length);
    return out;
}

template <typename T>
DualPolWaveform<T> cd_compensate(const DualPolWaveform<T>& w, double beta2, double length) {
    DualPolWaveform<T> out = w;
    apply_quadratic_phase(out, -0.5 * beta2 * length);
    return out;
}

template <typename T>
DualPolWaveform<T> frequency_shift(const DualPolWaveform<T>& w, double delta_f) {
    check_shape(w);
    require(std::abs(delta_f) < w.sample_rate / 2.0, "frequency_shift: |delta_f| must be below Fs/2");
    DualPolWaveform<T> out = w;
    const double step = 2.0 * pi * delta_f / w.sample_rate;
    for (std::size_t n = 0; n < w.size(); ++n) {
        // reduce the phase in double before the cast
        const double ph = std::remainder(step * static_cast<double>(n), 2.0 * pi);
        const std::complex<T> rot(static_cast<T>(std::cos(ph)), static_cast<T>(std::sin(ph)));
        out.x[n] *= rot;
        out.y[n] *= rot;
    }
    return out;
}

std::size_t guard_symbols(int filter_span_symbols, double beta2, double length, double symbol_rate) {
    const double memory = std::ceil(2.0 * pi * std::abs(beta2) * length * symbol_rate * symbol_rate);
    return static_cast<std::size_t>(filter_span_symbols) + static_cast<std::size_t>(memory);
}

#define FIBERSHAPE_INSTANTIATE_DSP(T)                                                                          \
    template struct DualPolWaveform<T>;                                                                       \
    template DualPolWaveform<T> modulate<T>(std::span<const Point4>, const RrcFilter&, double);              \
    template std::vector<Point4> matched_filter_downsample<T>(const DualPolWaveform<T>&, const RrcFilter&,    \
                                                              std::size_t);                                   \
    template std::vector<Point4> modulate_adjoint<T>(const DualPolWaveform<T>&, const RrcFilter&);           \
    template DualPolWaveform<T> matched_filter_adjoint<T>(std::span<const Point4>, const RrcFilter&,         \
                                                          std::size_t, double);                               \
    template DualPolWaveform<T> set_launch_power<T>(const DualPolWaveform<T>&, double);                      \
    template double launch_scale<T>(const DualPolWaveform<T>&, double);                                      \
    template DualPolWaveform<T> propagate_linear<T>(const DualPolWaveform<T>&, double, double);              \
    template DualPolWaveform<T> cd_compensate<T>(const DualPolWaveform<T>&, double, double);                 \
    template DualPolWaveform<T> frequency_shift<T>(const DualPolWaveform<T>&, double);                       \
    template void apply_quadratic_phase<T>(DualPolWaveform<T>&, double);

FIBERSHAPE_INSTANTIATE_DSP(float)
FIBERSHAPE_INSTANTIATE_DSP(double)

}  // namespace fibershape
