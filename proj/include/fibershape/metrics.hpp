#pragma once

#include "fibershape/constellation.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fibershape {

/// GMI from per-bit posterior estimates r_{k,i} = p(b_i = 1 | y_k):
/// H(X) + (1/K) Σ_k Σ_i [b log2 r + (1-b) log2(1-r)], with r clamped to
/// [1e-12, 1 - 1e-12]. bits and probs are K×m, row-major.
double gmi_nn(double entropy_bits, std::span<const std::uint8_t> bits, std::span<const double> probs, int m);

struct GmiEstimate {
    double gmi = 0.0;          // bits per 4D symbol
    double entropy = 0.0;
    double sigma2 = 0.0;       // auxiliary-channel variance used
    double ci95 = 0.0;         // half-width of the 95% confidence interval
    bool clipped = false;      // negative estimate clipped to 0
    bool empty_subset = false; // a bit-subset had zero mass for some sample
};

struct AuxGmiOptions {
    std::optional<double> sigma2;     // skip the fit when given
    std::size_t fit_samples = 4096;   // subsample used by the σ² search
};

/// Mismatched-decoding GMI with a 4D isotropic Gaussian auxiliary channel
/// q(y|x) ∝ exp(-‖y - x‖²/σ²) and the constellation's prior probabilities.
/// When σ² is not supplied it is fitted by maximizing the GMI over a
/// logarithmic grid around the moment-matched estimate, followed by a
/// golden-section refinement; the moment-matched value is always a candidate.
GmiEstimate gmi_aux_gaussian(const Constellation4D& c, std::span<const std::uint32_t> tx_indices,
                             std::span<const Point4> rx, const AuxGmiOptions& options = {});

/// Moment-matched σ² = E‖y - x‖² / 2 (variance per complex dimension).
double moment_matched_sigma2(const Constellation4D& c, std::span<const std::uint32_t> tx_indices,
                             std::span<const Point4> rx);

struct RateAndOverhead {
    double net_rate = 0.0;      // bit/s
    double fec_oh_percent = 0.0;
};

/// net rate = symbol_rate · gmi, FEC overhead = 100 (m/gmi - 1).
RateAndOverhead net_rate_and_oh(double gmi, int m, double symbol_rate);

/// Distance at which a decreasing rate-vs-distance curve crosses `target_rate`,
/// interpolating log(rate) linearly in distance between bracketing points.
/// curve: (distance, rate) pairs sorted by distance.
double reach_at_rate(std::span<const std::pair<double, double>> curve, double target_rate);

/// One row of an evaluation report.
struct GmiReport {
    double launch_power_dbm = 0.0;
    int n_spans = 0;
    int channel = 0;
    double entropy = 0.0;
    double gmi = 0.0;
    double net_rate_gbps = 0.0;
    double fec_oh_percent = 0.0;
    double ci95 = 0.0;
};

inline constexpr const char* kReportSchema = "fibershape-report v1";
std::string report_csv_header();
std::string report_csv_row(const GmiReport& r);

}  // namespace fibershape
