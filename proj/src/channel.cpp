#include "fibershape/channel.hpp"

#include "fibershape/error.hpp"
#include "fibershape/fft.hpp"
#include "fibershape/random.hpp"
#include "fibershape/units.hpp"

#include <cmath>
#include <string>

namespace fibershape {
namespace {

constexpr double kManakov = 8.0 / 9.0;

template <typename T>
std::vector<std::complex<T>> dispersion_phase(std::size_t n, double sample_rate, double beta2, double dz) {
    std::vector<std::complex<T>> h(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double om = bin_angular_frequency(k, n, sample_rate);
        const double ph = 0.5 * beta2 * om * om * dz;
        h[k] = {static_cast<T>(std::cos(ph)), static_cast<T>(std::sin(ph))};
    }
    return h;
}

template <typename T>
void apply_spectral(std::vector<std::complex<T>>& v, const std::vector<std::complex<T>>& h, bool conjugate) {
    fft_forward(std::span(v));
    if (conjugate) {
        for (std::size_t k = 0; k < v.size(); ++k) v[k] *= std::conj(h[k]);
    } else {
        for (std::size_t k = 0; k < v.size(); ++k) v[k] *= h[k];
    }
    fft_inverse(std::span(v));
}

template <typename T>
void apply_linear(DualPolWaveform<T>& w, const std::vector<std::complex<T>>& h, bool conjugate) {
    apply_spectral(w.x, h, conjugate);
    apply_spectral(w.y, h, conjugate);
}

template <typename T>
void nonlinear_step(DualPolWaveform<T>& w, double coeff) {
    const auto c = static_cast<T>(coeff);
    for (std::size_t i = 0; i < w.size(); ++i) {
        const T theta = c * (std::norm(w.x[i]) + std::norm(w.y[i]));
        const std::complex<T> rot(std::cos(theta), std::sin(theta));
        w.x[i] *= rot;
        w.y[i] *= rot;
    }
}

template <typename T>
void check_finite(const DualPolWaveform<T>& w, int step) {
    if (!w.all_finite()) {
        throw NumericalError("ssfm_span: non-finite field after step " + std::to_string(step));
    }
}

double effective_length(double alpha, double h) {
    if (alpha == 0.0) return h;
    return -std::expm1(-alpha * h) / alpha;
}

}  // namespace

FiberLink FiberLink::standard(int n_spans) {
    FiberLink l;
    l.beta2 = units::ps2_per_km_to_s2_per_m(-21.67);
    l.gamma = units::per_w_km_to_per_w_m(1.2);
    l.alpha = units::db_per_km_to_per_m(0.2);
    l.span_length = 80e3;
    l.n_spans = n_spans;
    l.nf_db = 5.0;
    l.steps_per_span = 200;
    l.center_wavelength = 1550e-9;
    return l;
}

void FiberLink::validate() const {
    require(std::isfinite(beta2), "fiber: beta2 must be finite");
    require(gamma >= 0.0 && std::isfinite(gamma), "fiber: gamma must be >= 0");
    require(alpha >= 0.0 && std::isfinite(alpha), "fiber: alpha must be >= 0");
    require(span_length > 0.0, "fiber: span length must be positive");
    require(n_spans >= 0, "fiber: span count must be >= 0");
    require(steps_per_span >= 1, "fiber: steps per span must be >= 1");
    require(center_wavelength > 0.0, "fiber: center wavelength must be positive");
    require(!std::isnan(nf_db), "fiber: noise figure must not be NaN");
}

double FiberLink::span_gain() const { return std::exp(alpha * span_length); }

void WdmConfig::validate() const {
    require(n_channels >= 1, "wdm: need at least one channel");
    require(symbol_rate > 0.0, "wdm: symbol rate must be positive");
    require(sps >= 2, "wdm: sps must be >= 2");
    require(rolloff > 0.0 && rolloff <= 1.0, "wdm: rolloff must be in (0, 1]");
    const double occupied = symbol_rate * (1.0 + rolloff);
    if (n_channels > 1) {
        require(spacing >= occupied, "wdm: channel spacing below symbol_rate*(1+rolloff)");
    }
    const double aggregate = (n_channels - 1) * spacing + occupied;
    require(aggregate < sample_rate(), "wdm: aggregate bandwidth " + std::to_string(aggregate / 1e9) +
                                           " GHz exceeds sample rate " + std::to_string(sample_rate() / 1e9) + " GHz");
    require(per_channel_power_dbm.empty() || static_cast<int>(per_channel_power_dbm.size()) == n_channels,
            "wdm: per-channel power list must have one entry per channel");
}

double wdm_offset(const WdmConfig& cfg, int index, std::size_t n_samples) {
    const double bin = cfg.sample_rate() / static_cast<double>(n_samples);
    return std::round(cfg.channel_offset(index) / bin) * bin;
}

double ase_variance_per_pol(const FiberLink& link, double sample_rate) {
    if (!link.ase_enabled()) return 0.0;
    const double n_sp = units::db_to_linear(link.nf_db) / 2.0;
    const double nu = units::kSpeedOfLight / link.center_wavelength;
    return (link.span_gain() - 1.0) * units::kPlanck * nu * n_sp * sample_rate;
}

template <typename T>
void ssfm_span(DualPolWaveform<T>& w, const FiberLink& link, SsfmTape<T>* tape) {
    link.validate();
    require(w.x.size() == w.y.size(), "ssfm_span: X and Y must have equal length");
    const std::size_t n = w.size();
    const int steps = link.steps_per_span;
    const double h = link.span_length / steps;
    if (tape) {
        *tape = SsfmTape<T>{};
        tape->beta2 = link.beta2;
        tape->sample_rate = w.sample_rate;
        tape->n_samples = n;
    }
    if (link.gamma == 0.0) {
        // purely linear span: the half steps compose exactly
        apply_quadratic_phase(w, 0.5 * link.beta2 * link.span_length);
        if (tape) tape->step = link.span_length;
        check_finite(w, steps);
        return;
    }
    if (tape) tape->step = h;
    const bool dispersive = link.beta2 != 0.0;
    std::vector<std::complex<T>> half, full;
    if (dispersive) {
        half = dispersion_phase<T>(n, w.sample_rate, link.beta2, h / 2.0);
        full = dispersion_phase<T>(n, w.sample_rate, link.beta2, h);
        apply_linear(w, half, false);
    }
    const double leff = effective_length(link.alpha, h);
    for (int s = 0; s < steps; ++s) {
        const double z = s * h;
        const double coeff = kManakov * link.gamma * std::exp(-link.alpha * z) * leff;
        if (tape) {
            tape->nl_input_x.push_back(w.x);
            tape->nl_input_y.push_back(w.y);
            tape->nl_coeff.push_back(coeff);
        }
        nonlinear_step(w, coeff);
        if (dispersive) apply_linear(w, s + 1 < steps ? full : half, false);
        check_finite(w, s);
    }
}

template <typename T>
DualPolWaveform<T> ssfm_span_backward(const SsfmTape<T>& tape, const DualPolWaveform<T>& output_gradient) {
    require(output_gradient.x.size() == tape.n_samples && output_gradient.y.size() == tape.n_samples,
            "ssfm_span_backward: gradient length does not match the tape");
    require(tape.nl_input_x.size() == tape.nl_coeff.size() && tape.nl_input_y.size() == tape.nl_coeff.size(),
            "ssfm_span_backward: corrupt tape");
    DualPolWaveform<T> g = output_gradient;
    g.sample_rate = tape.sample_rate;
    const std::size_t n = tape.n_samples;
    if (tape.nl_coeff.empty()) {
        apply_quadratic_phase(g, -0.5 * tape.beta2 * tape.step);
        return g;
    }
    const bool dispersive = tape.beta2 != 0.0;
    std::vector<std::complex<T>> half, full;
    if (dispersive) {
        half = dispersion_phase<T>(n, tape.sample_rate, tape.beta2, tape.step / 2.0);
        full = dispersion_phase<T>(n, tape.sample_rate, tape.beta2, tape.step);
    }
    const std::size_t steps = tape.nl_coeff.size();
    for (std::size_t s = steps; s-- > 0;) {
        if (dispersive) apply_linear(g, s + 1 < steps ? full : half, true);
        const auto& ax = tape.nl_input_x[s];
        const auto& ay = tape.nl_input_y[s];
        require(ax.size() == n && ay.size() == n, "ssfm_span_backward: tape field has wrong length");
        const auto c = static_cast<T>(tape.nl_coeff[s]);
        for (std::size_t i = 0; i < n; ++i) {
            const T theta = c * (std::norm(ax[i]) + std::norm(ay[i]));
            const std::complex<T> rot(std::cos(theta), std::sin(theta));
            const std::complex<T> ox = ax[i] * rot;
            const std::complex<T> oy = ay[i] * rot;
            // dL/dθ = Σ_p Re(conj(g_p) j o_p)
            const T dtheta = -(std::conj(g.x[i]) * ox).imag() - (std::conj(g.y[i]) * oy).imag();
            const T k = T(2) * c * dtheta;
            g.x[i] = g.x[i] * std::conj(rot) + k * ax[i];
            g.y[i] = g.y[i] * std::conj(rot) + k * ay[i];
        }
    }
    if (dispersive) apply_linear(g, half, true);
    return g;
}

template <typename T>
void edfa(DualPolWaveform<T>& w, const FiberLink& link, std::mt19937_64& rng) {
    const double var = ase_variance_per_pol(link, w.sample_rate);
    if (var <= 0.0) return;
    const double sd = std::sqrt(var / 2.0);
    auto add_noise = [&](std::vector<std::complex<T>>& v) {
        for (auto& s : v) {
            double im = 0.0;
            const double re = standard_normal_pair(rng, im);
            s += std::complex<T>(static_cast<T>(sd * re), static_cast<T>(sd * im));
        }
    };
    add_noise(w.x);
    add_noise(w.y);
}

template <typename T>
DualPolWaveform<T> propagate_link(const DualPolWaveform<T>& w, const FiberLink& link, std::uint64_t seed) {
    link.validate();
    DualPolWaveform<T> out = w;
    for (int s = 0; s < link.n_spans; ++s) {
        ssfm_span(out, link);
        auto rng = substream(seed, static_cast<std::uint64_t>(s));
        edfa(out, link, rng);
    }
    return out;
}

template <typename T>
DualPolWaveform<T> propagate_link_recorded(const DualPolWaveform<T>& w, const FiberLink& link,
                                           std::uint64_t seed, LinkTape<T>& tape) {
    link.validate();
    tape.spans.assign(static_cast<std::size_t>(link.n_spans), {});
    DualPolWaveform<T> out = w;
    for (int s = 0; s < link.n_spans; ++s) {
        ssfm_span(out, link, &tape.spans[static_cast<std::size_t>(s)]);
        auto rng = substream(seed, static_cast<std::uint64_t>(s));
        edfa(out, link, rng);
    }
    return out;
}

template <typename T>
DualPolWaveform<T> propagate_link_backward(const LinkTape<T>& tape, const DualPolWaveform<T>& output_gradient) {
    DualPolWaveform<T> g = output_gradient;
    for (std::size_t s = tape.spans.size(); s-- > 0;) g = ssfm_span_backward(tape.spans[s], g);
    return g;
}

template <typename T>
DualPolWaveform<T> wdm_mux(std::span<const DualPolWaveform<T>> channels, const WdmConfig& cfg) {
    cfg.validate();
    require(static_cast<int>(channels.size()) == cfg.n_channels, "wdm_mux: expected " +
                                                                     std::to_string(cfg.n_channels) + " channels");
    const auto& first = channels.front();
    for (const auto& c : channels) {
        require(c.size() == first.size() && c.y.size() == first.size(), "wdm_mux: channel lengths differ");
        require(std::abs(c.sample_rate - cfg.sample_rate()) <= 1e-9 * cfg.sample_rate(),
                "wdm_mux: channel sample rate does not match the WDM configuration");
    }
    if (cfg.n_channels == 1) return first;
    DualPolWaveform<T> out;
    out.sample_rate = cfg.sample_rate();
    out.x.assign(first.size(), {});
    out.y.assign(first.size(), {});
    for (int i = 0; i < cfg.n_channels; ++i) {
        const auto shifted = frequency_shift(channels[static_cast<std::size_t>(i)], wdm_offset(cfg, i, first.size()));
        for (std::size_t k = 0; k < out.size(); ++k) {
            out.x[k] += shifted.x[k];
            out.y[k] += shifted.y[k];
        }
    }
    return out;
}

template <typename T>
DualPolWaveform<T> wdm_demux(const DualPolWaveform<T>& w, const WdmConfig& cfg, int index) {
    cfg.validate();
    require(index >= 0 && index < cfg.n_channels, "wdm_demux: channel index out of range");
    if (cfg.n_channels == 1) return w;
    return frequency_shift(w, -wdm_offset(cfg, index, w.size()));
}

#define FIBERSHAPE_INSTANTIATE_CHANNEL(T)                                                                       \
    template struct SsfmTape<T>;                                                                               \
    template struct LinkTape<T>;                                                                               \
    template void ssfm_span<T>(DualPolWaveform<T>&, const FiberLink&, SsfmTape<T>*);                           \
    template DualPolWaveform<T> ssfm_span_backward<T>(const SsfmTape<T>&, const DualPolWaveform<T>&);         \
    template void edfa<T>(DualPolWaveform<T>&, const FiberLink&, std::mt19937_64&);                           \
    template DualPolWaveform<T> propagate_link<T>(const DualPolWaveform<T>&, const FiberLink&, std::uint64_t); \
    template DualPolWaveform<T> propagate_link_recorded<T>(const DualPolWaveform<T>&, const FiberLink&,       \
                                                           std::uint64_t, LinkTape<T>&);                      \
    template DualPolWaveform<T> propagate_link_backward<T>(const LinkTape<T>&, const DualPolWaveform<T>&);    \
    template DualPolWaveform<T> wdm_mux<T>(std::span<const DualPolWaveform<T>>, const WdmConfig&);            \
    template DualPolWaveform<T> wdm_demux<T>(const DualPolWaveform<T>&, const WdmConfig&, int);

FIBERSHAPE_INSTANTIATE_CHANNEL(float)
FIBERSHAPE_INSTANTIATE_CHANNEL(double)

}  // namespace fibershape
