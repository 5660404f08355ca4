#pragma once

#include <cmath>
#include <numbers>

// All internal quantities are SI (s, m, W, Hz). Conversions from the usual
// datasheet units live here and are only used at configuration boundaries.
namespace fibershape::units {

inline constexpr double kPlanck = 6.62607015e-34;      // J s
inline constexpr double kSpeedOfLight = 299792458.0;   // m/s

inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watt_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// dB/km power attenuation -> 1/m (power attenuation coefficient alpha).
inline double db_per_km_to_per_m(double db_km) {
    return db_km * std::numbers::ln10 / 10.0 / 1e3;
}
/// ps^2/km -> s^2/m
inline double ps2_per_km_to_s2_per_m(double v) { return v * 1e-24 / 1e3; }
/// 1/(W km) -> 1/(W m)
inline double per_w_km_to_per_w_m(double v) { return v / 1e3; }

}  // namespace fibershape::units
