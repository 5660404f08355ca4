#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fibershape {

/// One 4D symbol: [re X, im X, re Y, im Y].
using Point4 = std::array<double, 4>;

inline double energy(const Point4& p) {
    return p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3];
}

/// A 4D modulation format with per-symbol probabilities.
///
/// Labels are m-bit integers read most-significant-bit first: bit index 0 is
/// the MSB. Symbol i is transmitted with probability probs[i] and carries the
/// bits of labels[i].
struct Constellation4D {
    int bits_per_symbol = 0;
    std::vector<Point4> points;
    std::vector<std::uint32_t> labels;
    std::vector<double> probs;

    std::size_t size() const { return points.size(); }

    /// Bit `bit_index` (0 = MSB) of symbol `symbol`.
    int bit(std::size_t symbol, int bit_index) const {
        return static_cast<int>((labels[symbol] >> (bits_per_symbol - 1 - bit_index)) & 1U);
    }

    /// Σ probs_i ‖points_i‖².
    double average_energy() const;

    bool operator==(const Constellation4D&) const = default;
};

/// Throws InvalidInput naming the first violated invariant: M = 2^m, labels a
/// permutation of 0..M-1, probabilities nonnegative and summing to 1 within
/// 1e-9, finite coordinates. With `require_unit_energy`, also checks the
/// normalized-energy invariant.
void validate(const Constellation4D& c, bool require_unit_energy = false);

/// Uniform PM-QAM: the Cartesian product of a Gray-labelled 2D QAM with itself,
/// X-polarization label in the high bits. m_per_2d in {2,3,4,5,6}; 3 gives
/// rectangular 8-QAM and 5 gives cross 32-QAM with a quasi-Gray labelling.
Constellation4D make_pm_qam(int m_per_2d);

/// PM-64QAM with Maxwell-Boltzmann probabilities exp(-lambda ‖x‖²) evaluated on
/// the unnormalized odd-integer grid, then energy normalized.
Constellation4D make_mb_shaped_pm64qam(double lambda);

/// Scales all points by one factor so that Σ p‖x‖² = 1.
Constellation4D normalize(const Constellation4D& c);

/// Entropy of the symbol distribution in bits (0 log 0 := 0).
double entropy(const Constellation4D& c);

/// Minimum pairwise Euclidean distance between points.
double min_distance(const Constellation4D& c);

/// Named baselines accepted by the CLI: pm-qpsk, pm8qam, pm16qam, pm32qam,
/// pm64qam, and ps-pm64qam:<lambda>.
Constellation4D make_baseline(const std::string& name);

/// Versioned text format. Doubles are written with shortest round-trip
/// formatting so load(save(c)) == c bit for bit.
void save(const Constellation4D& c, const std::filesystem::path& path);
Constellation4D load(const std::filesystem::path& path);

std::string to_text(const Constellation4D& c);
Constellation4D from_text(const std::string& text);

}  // namespace fibershape
