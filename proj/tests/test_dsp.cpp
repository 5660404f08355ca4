#include <doctest.h>

#include "oracles.hpp"

#include "fibershape/dsp.hpp"
#include "fibershape/error.hpp"

#include <cmath>
#include <numbers>

using namespace fibershape;

namespace {

DualPolWaveform<double> random_waveform(std::size_t n, double fs, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    DualPolWaveform<double> w;
    w.sample_rate = fs;
    for (std::size_t i = 0; i < n; ++i) {
        w.x.emplace_back(g(rng), g(rng));
        w.y.emplace_back(g(rng), g(rng));
    }
    return w;
}

double max_rel_diff(const DualPolWaveform<double>& a, const DualPolWaveform<double>& b) {
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        scale = std::max({scale, std::abs(a.x[i]), std::abs(a.y[i])});
        diff = std::max({diff, std::abs(a.x[i] - b.x[i]), std::abs(a.y[i] - b.y[i])});
    }
    return diff / scale;
}

double inner(const DualPolWaveform<double>& a, const DualPolWaveform<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (std::conj(a.x[i]) * b.x[i]).real() + (std::conj(a.y[i]) * b.y[i]).real();
    return s;
}

double inner(const std::vector<Point4>& a, const std::vector<Point4>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        for (int d = 0; d < 4; ++d) s += a[k][d] * b[k][d];
    }
    return s;
}

// worst off-peak |p(kT)| / p(0) of the taps convolved with themselves, in dB
double isi_db(const RrcFilter& f) {
    const auto& h = f.taps;
    const std::size_t n = h.size();
    auto p = [&](long lag) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const long j = static_cast<long>(i) + lag;
            if (j >= 0 && j < static_cast<long>(n)) acc += h[i] * h[static_cast<std::size_t>(j)];
        }
        return acc;
    };
    double worst = 0.0;
    for (long k = 1; k * f.sps < static_cast<long>(n); ++k) worst = std::max(worst, std::abs(p(k * f.sps)));
    return 20.0 * std::log10(worst / p(0));
}

}  // namespace

TEST_CASE("rrc design invariants") {
    for (double beta : {0.01, 0.1, 0.25, 1.0}) {
        for (int sps : {2, 4, 16}) {
            const auto f = design_rrc(beta, sps, 32);
            CHECK(f.taps.size() % 2 == 1);
            CHECK(f.taps.size() == static_cast<std::size_t>(32 * sps + 1));
            double e = 0.0;
            for (double t : f.taps) {
                CHECK(std::isfinite(t));
                e += t * t;
            }
            CHECK(e == doctest::Approx(1.0).epsilon(1e-9));
            for (std::size_t k = 0; k < f.taps.size(); ++k) CHECK(f.taps[k] == f.taps[f.taps.size() - 1 - k]);
        }
    }
    CHECK_THROWS_AS(design_rrc(0.0, 4), InvalidInput);
    CHECK_THROWS_AS(design_rrc(1.5, 4), InvalidInput);
    CHECK_THROWS_AS(design_rrc(0.1, 1), InvalidInput);
    CHECK_THROWS_AS(design_rrc(0.1, 4, 3), InvalidInput);
}

TEST_CASE("rrc cascade is Nyquist: ISI by direct convolution") {
    const double isi128 = isi_db(design_rrc(0.01, 16, 128));
    const double isi64 = isi_db(design_rrc(0.01, 16, 64));
    MESSAGE("ISI span 64: " << isi64 << " dB, span 128: " << isi128 << " dB");
    CHECK(isi128 < -40.0);
    CHECK(isi64 < isi_db(design_rrc(0.01, 16, 32)));
    // singular points t = ±T/(4β) hit exactly on the grid for β = 0.25, sps 4
    CHECK(isi_db(design_rrc(0.25, 4, 64)) < -40.0);
}

TEST_CASE("modulate: impulse response, zero input, sample rate") {
    const auto f = design_rrc(0.01, 16);
    std::vector<Point4> sym(512, Point4{0, 0, 0, 0});
    sym[0] = {1, 0, 0, 0};
    const auto w = modulate<double>(sym, f, 50e9);
    CHECK(w.sample_rate == doctest::Approx(800e9));
    CHECK(w.size() == 512 * 16);
    const auto half = static_cast<long>(f.delay());
    const double gain = std::sqrt(16.0);
    double worst = 0.0;
    for (long k = -half; k <= half; ++k) {
        const auto idx = static_cast<std::size_t>((k + static_cast<long>(w.size())) % static_cast<long>(w.size()));
        worst = std::max(worst, std::abs(w.x[idx].real() - gain * f.taps[static_cast<std::size_t>(k + half)]));
        CHECK(std::abs(w.x[idx].imag()) < 1e-12);
        CHECK(std::abs(w.y[idx]) < 1e-12);
    }
    // block response is the untruncated limit of the taps
    CHECK(worst < 2e-3 * gain * f.taps[static_cast<std::size_t>(half)]);

    const auto z = modulate<double>(std::vector<Point4>(64, Point4{0, 0, 0, 0}), f, 50e9);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(z.x[i]) + std::abs(z.y[i]) == 0.0);
    CHECK_THROWS_AS(modulate<double>(std::vector<Point4>{}, f, 50e9), InvalidInput);
}

TEST_CASE("back-to-back loopback and delay") {
    const auto f = design_rrc(0.01, 16);
    const auto c = make_pm_qam(5);
    std::mt19937_64 rng(3);
    const auto tx = oracle::gather(c, oracle::draw_indices(1024, c.size(), rng));
    const auto rx = matched_filter_downsample(modulate<double>(tx, f, 50e9), f, tx.size());
    double err = 0.0;
    for (std::size_t k = 0; k < tx.size(); ++k) {
        for (int d = 0; d < 4; ++d) err = std::max(err, std::abs(rx[k][d] - tx[k][d]));
    }
    CHECK(err < 1e-6);

    std::vector<Point4> imp(256, Point4{0, 0, 0, 0});
    imp[37] = {0, 0, 0, 1};
    const auto back = matched_filter_downsample(modulate<double>(imp, f, 50e9), f, imp.size());
    std::size_t peak = 0;
    for (std::size_t k = 0; k < back.size(); ++k) {
        if (std::abs(back[k][3]) > std::abs(back[peak][3])) peak = k;
    }
    CHECK(peak == 37);

    const auto w = modulate<double>(tx, f, 50e9);
    CHECK_THROWS_AS(matched_filter_downsample(w, f, tx.size() + 1), InvalidInput);
}

TEST_CASE("float loopback") {
    const auto f = design_rrc(0.01, 4);
    const auto c = make_pm_qam(2);
    std::mt19937_64 rng(4);
    const auto tx = oracle::gather(c, oracle::draw_indices(512, c.size(), rng));
    const auto rx = matched_filter_downsample(modulate<float>(tx, f, 50e9), f, tx.size());
    for (std::size_t k = 0; k < tx.size(); ++k) {
        for (int d = 0; d < 4; ++d) CHECK(std::abs(rx[k][d] - tx[k][d]) < 1e-5);
    }
}

TEST_CASE("adjoints of modulate and matched filter") {
    const auto f = design_rrc(0.05, 4);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Point4> s(128), r(128);
    for (auto& p : s) for (auto& v : p) v = g(rng);
    for (auto& p : r) for (auto& v : p) v = g(rng);
    const auto w = random_waveform(512, 200e9, rng);
    // <modulate(s), w> = <s, modulate_adjoint(w)>
    CHECK(inner(modulate<double>(s, f, 50e9), w) == doctest::Approx(inner(s, modulate_adjoint(w, f))).epsilon(1e-10));
    // <mf(w), r> = <w, mf_adjoint(r)>
    CHECK(inner(matched_filter_downsample(w, f, 128), r) ==
          doctest::Approx(inner(w, matched_filter_adjoint<double>(r, f, 512, 200e9))).epsilon(1e-10));
}

TEST_CASE("launch power") {
    std::mt19937_64 rng(6);
    const auto w = random_waveform(1000, 100e9, rng);
    CHECK(set_launch_power(w, 0.0).mean_power() == doctest::Approx(1e-3).epsilon(1e-9));
    CHECK(set_launch_power(w, 3.0).mean_power() == doctest::Approx(1.99526231e-3).epsilon(1e-8));
    const auto once = set_launch_power(w, 2.5);
    const auto twice = set_launch_power(once, 2.5);
    CHECK(max_rel_diff(once, twice) < 1e-12);
    CHECK(launch_scale(w, 0.0) == doctest::Approx(std::sqrt(1e-3 / w.mean_power())).epsilon(1e-12));
    DualPolWaveform<double> zero;
    zero.sample_rate = 1.0;
    zero.x.assign(8, {});
    zero.y.assign(8, {});
    CHECK_THROWS_AS(set_launch_power(zero, 0.0), InvalidInput);
}

TEST_CASE("dispersion operator against a direct DFT") {
    std::mt19937_64 rng(7);
    const std::size_t n = 64;
    const double fs = 200e9, beta2 = -21.67e-27, length = 300e3;
    const auto w = random_waveform(n, fs, rng);
    const auto out = propagate_linear(w, beta2, length);
    const auto spec = oracle::dft(w.x);
    std::vector<std::complex<double>> shaped(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double f = (2 * k < n ? double(k) : double(k) - double(n)) * fs / double(n);
        const double om = 2 * std::numbers::pi * f;
        shaped[k] = spec[k] * std::polar(1.0, 0.5 * beta2 * om * om * length);
    }
    // inverse DFT via the forward kernel on the conjugate
    for (auto& v : shaped) v = std::conj(v);
    auto back = oracle::dft(shaped);
    for (std::size_t t = 0; t < n; ++t) CHECK(std::abs(std::conj(back[t]) / double(n) - out.x[t]) < 1e-9);
}

TEST_CASE("cd compensation inverts propagation and preserves power") {
    std::mt19937_64 rng(8);
    const auto w = random_waveform(4096, 800e9, rng);
    const double beta2 = -21.67e-27, length = 4000e3;
    const auto p = propagate_linear(w, beta2, length);
    CHECK(max_rel_diff(cd_compensate(p, beta2, length), w) < 1e-6);
    CHECK(p.total_energy() == doctest::Approx(w.total_energy()).epsilon(1e-12));
    CHECK(cd_compensate(w, beta2, length).total_energy() == doctest::Approx(w.total_energy()).epsilon(1e-12));
    CHECK(max_rel_diff(cd_compensate(w, beta2, 0.0), w) < 1e-15);
}

TEST_CASE("frequency shift") {
    std::mt19937_64 rng(9);
    const auto w = random_waveform(256, 64e9, rng);
    const auto s = frequency_shift(w, 7.3e9);
    CHECK(s.total_energy() == doctest::Approx(w.total_energy()).epsilon(1e-12));
    CHECK(max_rel_diff(frequency_shift(s, -7.3e9), w) < 1e-9);

    DualPolWaveform<double> tone;
    tone.sample_rate = 64e9;
    tone.x.assign(64, {1.0, 0.0});
    tone.y.assign(64, {0.0, 0.0});
    const auto spec = oracle::dft(frequency_shift(tone, 1e9).x);
    std::size_t peak = 0;
    for (std::size_t k = 0; k < spec.size(); ++k) {
        if (std::abs(spec[k]) > std::abs(spec[peak])) peak = k;
    }
    CHECK(peak == 1);  // 1 GHz at 1 GHz bin spacing
    CHECK_THROWS_AS(frequency_shift(w, 40e9), InvalidInput);
}

TEST_CASE("linear channel + CDC + matched filter restores symbols") {
    const auto f = design_rrc(0.01, 8);
    const auto c = make_pm_qam(4);
    std::mt19937_64 rng(10);
    const auto tx = oracle::gather(c, oracle::draw_indices(2048, c.size(), rng));
    const double beta2 = -21.67e-27, length = 2000e3;
    const auto w = propagate_linear(modulate<double>(tx, f, 50e9), beta2, length);
    const auto rx = matched_filter_downsample(cd_compensate(w, beta2, length), f, tx.size());
    double err = 0.0;
    for (std::size_t k = 0; k < tx.size(); ++k) {
        for (int d = 0; d < 4; ++d) err = std::max(err, std::abs(rx[k][d] - tx[k][d]));
    }
    CHECK(err < 1e-5);
}

TEST_CASE("guard symbols") {
    // 2π · 21.67e-27 · 4e6 · (50e9)² = 1361.5...
    CHECK(guard_symbols(128, -21.67e-27, 4000e3, 50e9) == 128 + 1362);
    CHECK(guard_symbols(64, 0.0, 4000e3, 50e9) == 64);
}
