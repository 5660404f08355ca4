#include "fibershape/metrics.hpp"

#include "fibershape/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

namespace fibershape {
namespace {

constexpr double kClamp = 1e-12;

struct AuxTerms {
    std::vector<double> per_sample;  // Σ_i log2(num / den_i) for each k
    bool empty_subset = false;
};

// Per-sample bit-metric penalty terms for the Gaussian auxiliary channel.
AuxTerms aux_terms(const Constellation4D& c, std::span<const std::uint32_t> tx, std::span<const Point4> rx,
                   double sigma2, std::size_t stride = 1) {
    const std::size_t M = c.size();
    const int m = c.bits_per_symbol;
    std::vector<double> log_prior(M);
    for (std::size_t j = 0; j < M; ++j) {
        log_prior[j] = c.probs[j] > 0.0 ? std::log(c.probs[j]) : -std::numeric_limits<double>::infinity();
    }
    std::vector<std::uint8_t> bit_table(M * static_cast<std::size_t>(m));
    for (std::size_t j = 0; j < M; ++j) {
        for (int i = 0; i < m; ++i) bit_table[j * m + i] = static_cast<std::uint8_t>(c.bit(j, i));
    }
    AuxTerms out;
    out.per_sample.reserve(tx.size() / stride + 1);
    std::vector<double> metric(M);
    std::vector<double> ones(static_cast<std::size_t>(m));
    std::vector<double> zeros(static_cast<std::size_t>(m));
    const double inv = 1.0 / sigma2;
    for (std::size_t k = 0; k < tx.size(); k += stride) {
        const auto& y = rx[k];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < M; ++j) {
            const auto& x = c.points[j];
            const double d0 = y[0] - x[0], d1 = y[1] - x[1], d2 = y[2] - x[2], d3 = y[3] - x[3];
            metric[j] = log_prior[j] - (d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3) * inv;
            mx = std::max(mx, metric[j]);
        }
        std::fill(ones.begin(), ones.end(), 0.0);
        std::fill(zeros.begin(), zeros.end(), 0.0);
        double total = 0.0;
        for (std::size_t j = 0; j < M; ++j) {
            const double w = std::exp(metric[j] - mx);
            total += w;
            const std::uint8_t* b = &bit_table[j * m];
            for (int i = 0; i < m; ++i) (b[i] ? ones[i] : zeros[i]) += w;
        }
        const std::uint32_t sent = tx[k];
        double term = 0.0;
        for (int i = 0; i < m; ++i) {
            const double den = bit_table[sent * m + i] ? ones[i] : zeros[i];
            double log_den;
            if (den > 0.0) {
                log_den = std::log(den);
            } else {
                // every weight in the subset underflowed: fall back to the
                // largest metric in the subset (log-sum-exp floor)
                out.empty_subset = true;
                double best = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < M; ++j) {
                    if (bit_table[j * m + i] == bit_table[sent * m + i]) best = std::max(best, metric[j] - mx);
                }
                log_den = std::isfinite(best) ? best : -745.0;
            }
            term += (std::log(total) - log_den) / std::numbers::ln2;
        }
        out.per_sample.push_back(term);
    }
    return out;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double gmi_nn(double entropy_bits, std::span<const std::uint8_t> bits, std::span<const double> probs, int m) {
    require(m >= 1, "gmi_nn: m must be >= 1");
    require(bits.size() == probs.size(), "gmi_nn: bits and probabilities differ in size");
    require(bits.size() % static_cast<std::size_t>(m) == 0, "gmi_nn: size is not a multiple of m");
    const std::size_t K = bits.size() / static_cast<std::size_t>(m);
    require(K > 0, "gmi_nn: K must be positive");
    double acc = 0.0;
    for (std::size_t n = 0; n < bits.size(); ++n) {
        const double r = std::clamp(probs[n], kClamp, 1.0 - kClamp);
        require(bits[n] <= 1, "gmi_nn: bits must be 0 or 1");
        acc += bits[n] ? std::log2(r) : std::log2(1.0 - r);
    }
    return entropy_bits + acc / static_cast<double>(K);
}

double moment_matched_sigma2(const Constellation4D& c, std::span<const std::uint32_t> tx_indices,
                             std::span<const Point4> rx) {
    require(tx_indices.size() == rx.size() && !rx.empty(), "gmi: need matching, nonempty tx/rx");
    double acc = 0.0;
    for (std::size_t k = 0; k < rx.size(); ++k) {
        require(tx_indices[k] < c.size(), "gmi: transmitted index out of range");
        const auto& x = c.points[tx_indices[k]];
        for (int d = 0; d < 4; ++d) {
            const double e = rx[k][d] - x[d];
            acc += e * e;
        }
    }
    return acc / static_cast<double>(rx.size()) / 2.0;
}

GmiEstimate gmi_aux_gaussian(const Constellation4D& c, std::span<const std::uint32_t> tx_indices,
                             std::span<const Point4> rx, const AuxGmiOptions& options) {
    validate(c);
    require(tx_indices.size() == rx.size(), "gmi_aux_gaussian: tx and rx lengths differ");
    require(!rx.empty(), "gmi_aux_gaussian: K must be >= 1");
    for (auto t : tx_indices) require(t < c.size(), "gmi_aux_gaussian: transmitted index out of range");
    for (const auto& y : rx) {
        for (double v : y) {
            if (!std::isfinite(v)) throw NumericalError("gmi_aux_gaussian: non-finite received sample");
        }
    }
    const double h = entropy(c);
    const double floor = 1e-12 * std::max(c.average_energy(), 1e-300);

    auto full_gmi = [&](double s2, AuxTerms* keep = nullptr) {
        AuxTerms t = aux_terms(c, tx_indices, rx, s2);
        const double g = h - mean_of(t.per_sample);
        if (keep) *keep = std::move(t);
        return g;
    };

    double sigma2 = 0.0;
    if (options.sigma2) {
        require(*options.sigma2 > 0.0, "gmi_aux_gaussian: sigma2 must be positive");
        sigma2 = *options.sigma2;
    } else {
        const double mm = std::max(moment_matched_sigma2(c, tx_indices, rx), floor);
        const std::size_t stride = std::max<std::size_t>(1, rx.size() / std::max<std::size_t>(1, options.fit_samples));
        auto objective = [&](double log10_s2) {
            return h - mean_of(aux_terms(c, tx_indices, rx, std::pow(10.0, log10_s2), stride).per_sample);
        };
        const double centre = std::log10(mm);
        constexpr int kGrid = 10;
        constexpr double kStep = 0.1;  // decades
        double best_x = centre;
        double best_f = objective(centre);
        for (int i = -kGrid; i <= kGrid; ++i) {
            if (i == 0) continue;
            const double x = centre + i * kStep;
            const double f = objective(x);
            if (f > best_f) {
                best_f = f;
                best_x = x;
            }
        }
        double a = best_x - kStep, b = best_x + kStep;
        const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
        double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
        double f1 = objective(x1), f2 = objective(x2);
        for (int it = 0; it < 20; ++it) {
            if (f1 > f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = objective(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = objective(x2);
            }
        }
        const double refined = f1 > f2 ? x1 : x2;
        if (std::max(f1, f2) > best_f) best_x = refined;
        // final choice on the full sample set; never worse than moment matching
        const double cand = std::pow(10.0, best_x);
        sigma2 = full_gmi(cand) >= full_gmi(mm) ? cand : mm;
    }

    AuxTerms terms;
    GmiEstimate est;
    est.entropy = h;
    est.sigma2 = sigma2;
    est.gmi = full_gmi(sigma2, &terms);
    est.empty_subset = terms.empty_subset;
    const double mu = mean_of(terms.per_sample);
    double var = 0.0;
    for (double t : terms.per_sample) var += (t - mu) * (t - mu);
    const auto K = static_cast<double>(terms.per_sample.size());
    var = K > 1 ? var / (K - 1.0) : 0.0;
    est.ci95 = 1.96 * std::sqrt(var / K);
    if (!std::isfinite(est.gmi)) throw NumericalError("gmi_aux_gaussian: non-finite GMI estimate");
    if (est.gmi < 0.0) {
        est.gmi = 0.0;
        est.clipped = true;
    }
    return est;
}

RateAndOverhead net_rate_and_oh(double gmi, int m, double symbol_rate) {
    require(gmi > 0.0, "net_rate_and_oh: gmi must be positive");
    require(m >= 1 && gmi <= m + 1e-9, "net_rate_and_oh: gmi must not exceed m");
    require(symbol_rate > 0.0, "net_rate_and_oh: symbol rate must be positive");
    return {symbol_rate * gmi, 100.0 * (static_cast<double>(m) / gmi - 1.0)};
}

double reach_at_rate(std::span<const std::pair<double, double>> curve, double target_rate) {
    require(curve.size() >= 1, "reach_at_rate: empty curve");
    for (std::size_t i = 0; i < curve.size(); ++i) {
        require(curve[i].second > 0.0, "reach_at_rate: rates must be positive");
        if (i > 0) {
            require(curve[i].first > curve[i - 1].first, "reach_at_rate: distances must increase");
            require(curve[i].second <= curve[i - 1].second, "reach_at_rate: rate must be non-increasing in distance");
        }
    }
    for (const auto& [d, r] : curve) {
        if (r == target_rate) return d;
    }
    require(target_rate <= curve.front().second && target_rate >= curve.back().second,
            "reach_at_rate: target rate outside the curve's range");
    for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
        const auto [d0, r0] = curve[i];
        const auto [d1, r1] = curve[i + 1];
        if (r0 >= target_rate && target_rate >= r1) {
            if (r0 == r1) return d0;
            const double t = (std::log(r0) - std::log(target_rate)) / (std::log(r0) - std::log(r1));
            return d0 + t * (d1 - d0);
        }
    }
    throw InvalidInput("reach_at_rate: target rate not bracketed");
}

std::string report_csv_header() { return "power_dbm,n_spans,channel,entropy,gmi,net_rate_gbps,fec_oh_pct,ci95"; }

std::string report_csv_row(const GmiReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.3f,%d,%d,%.6f,%.6f,%.4f,%.4f,%.6f", r.launch_power_dbm, r.n_spans, r.channel,
                  r.entropy, r.gmi, r.net_rate_gbps, r.fec_oh_percent, r.ci95);
    return buf;
}

}  // namespace fibershape
