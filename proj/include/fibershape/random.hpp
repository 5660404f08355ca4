#pragma once

#include <cstdint>
#include <random>

namespace fibershape {

/// SplitMix64 finalizer; used to derive independent substream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic substream for (seed, a, b, c). Substreams are derived from
/// counters rather than drawn sequentially, so results do not depend on the
/// order in which concurrent work items run.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ a);
    h = mix64(h ^ (b + 0x632be59bd9b4e019ULL));
    h = mix64(h ^ (c + 0x8cb92ba72f3d8dd7ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return std::mt19937_64(seq);
}

/// Standard normal draw via Box-Muller on the raw engine. std::normal_distribution
/// is implementation-defined, this keeps streams identical across toolchains.
inline double standard_normal_pair(std::mt19937_64& rng, double& second) {
    constexpr double kTwoPi = 6.283185307179586476925;
    const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    second = r * std::sin(kTwoPi * u2);
    return r * std::cos(kTwoPi * u2);
}

inline double uniform01(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace fibershape
