#pragma once

#include "fibershape/channel.hpp"
#include "fibershape/constellation.hpp"
#include "fibershape/metrics.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace fibershape {

/// Worker count: FIBERSHAPE_THREADS if set and positive, else the hardware
/// concurrency (at least 1).
int thread_count();

/// Runs job(i) for i in [0, n) on `threads` workers. The first exception is
/// rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& job);

/// A format file path or a baseline name understood by make_baseline.
Constellation4D resolve_format(const std::string& format_or_baseline);

/// Evaluation of one (power, n_spans) grid point.
struct PointResult {
    double power_dbm = 0.0;
    int n_spans = 0;
    std::vector<GmiEstimate> channels;
};

struct PointOptions {
    std::size_t n_symbols = 1 << 13;
    std::uint64_t seed = 1;
    bool gain_correction = true;  // per-polarization complex gain, data aided
    bool discard_guard = true;
};

/// Transmit, propagate and receive one block per channel with all channels at
/// `power_dbm`, then estimate the auxiliary-channel GMI per channel on the
/// symbols that remain after guard removal. Different formats evaluated with
/// the same seed see the same noise realizations.
PointResult evaluate_point(const Constellation4D& format, const WdmConfig& wdm, const FiberLink& link,
                           double power_dbm, const PointOptions& options);

struct EvalConfig {
    std::string format = "pm32qam";
    WdmConfig wdm;
    FiberLink link;
    std::vector<double> powers_dbm;
    std::vector<int> spans;
    std::vector<double> target_rates_gbps;
    PointOptions point;
    int threads = 0;  // 0: thread_count()

    /// −4..+6 dBm in 0.5 dB steps, 25..88 spans in steps of 3 (+88), 400 Gbit/s.
    static EvalConfig defaults();
};

nlohmann::json to_json(const EvalConfig& cfg);

struct BestPower {
    int n_spans = 0;
    double power_dbm = 0.0;
    double mean_gmi = 0.0;
    double net_rate_gbps = 0.0;  // per channel, mean over channels
};

struct ReachRow {
    double target_rate_gbps = 0.0;
    double reach_km = 0.0;  // NaN when the curve never crosses the target
};

struct EvalResult {
    std::vector<GmiReport> rows;  // sorted by (n_spans, power, channel)
    std::vector<BestPower> best;
    std::vector<ReachRow> reach;
};

EvalResult run_evaluation(const EvalConfig& cfg);

/// Writes report.csv, best_power.csv, reach.csv and config.json into out_dir.
EvalResult cmd_evaluate(const EvalConfig& cfg, const std::filesystem::path& out_dir);

struct EnergyRow {
    std::size_t index = 0;
    std::uint32_t label = 0;
    double energy = 0.0;
    double probability = 0.0;
};

struct EnergyReport {
    std::vector<EnergyRow> rows;
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;      // under the symbol probabilities
    double variance = 0.0;  // under the symbol probabilities
};

EnergyReport energy_report(const Constellation4D& c);
inline constexpr const char* kEnergySchema = "fibershape-energy v1";
std::string energy_csv(const EnergyReport& r);
std::string energy_summary_csv(const EnergyReport& r);

struct RrcSelftest {
    double isi_db = 0.0;            // worst-case ISI of the truncated taps
    double loopback_max_error = 0.0;
    bool pass = false;
};

/// ISI of the truncated-tap filter and back-to-back loopback error of the
/// block filter on random PM-QPSK symbols.
RrcSelftest rrc_selftest(double rolloff, int sps, int span_symbols, std::size_t n_symbols, std::uint64_t seed);

struct GradCheckResult {
    std::string name;
    int probes = 0;
    double max_rel_error = 0.0;
};

/// Reverse-mode gradients of every graph primitive, the SSFM span and the
/// differentiable fiber channel against central differences (double, h=1e-6).
std::vector<GradCheckResult> grad_check(int probes, std::uint64_t seed);

}  // namespace fibershape
