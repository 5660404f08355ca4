// Command-line front end. Exit codes: 0 success, 1 user error, 2 numerical failure.

#include "fibershape/error.hpp"
#include "fibershape/harness.hpp"
#include "fibershape/trainer.hpp"
#include "fibershape/units.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>

using namespace fibershape;

namespace {

constexpr int kExitUser = 1;
constexpr int kExitNumerical = 2;

// "a:b:step" (inclusive) or "a,b,c"
std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    auto number = [&](std::string_view s) {
        double v = 0.0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw InvalidInput("bad number '" + std::string(s) + "' in grid");
        return v;
    };
    if (text.find(':') != std::string::npos) {
        const auto a = text.find(':');
        const auto b = text.find(':', a + 1);
        require(b != std::string::npos, "grid range must be start:stop:step");
        const double lo = number(std::string_view(text).substr(0, a));
        const double hi = number(std::string_view(text).substr(a + 1, b - a - 1));
        const double step = number(std::string_view(text).substr(b + 1));
        require(step > 0.0 && hi >= lo, "grid range needs step > 0 and stop >= start");
        const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
        for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
        return out;
    }
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = std::min(text.find(',', start), text.size());
        out.push_back(number(std::string_view(text).substr(start, end - start)));
        start = end + 1;
    }
    return out;
}

struct PhysicsFlags {
    std::optional<double> beta2_ps2_km, gamma_w_km, alpha_db_km, span_km, wavelength_nm;
    std::optional<std::string> nf_db;
    std::optional<int> steps_per_span;
    std::optional<int> channels, sps;
    std::optional<double> symbol_rate_gbd, spacing_ghz, rolloff;

    void add(CLI::App* app) {
        app->add_option("--beta2", beta2_ps2_km, "group velocity dispersion [ps^2/km]");
        app->add_option("--gamma", gamma_w_km, "nonlinear coefficient [1/W/km]");
        app->add_option("--alpha", alpha_db_km, "attenuation [dB/km]");
        app->add_option("--span-length", span_km, "span length [km]");
        app->add_option("--nf", nf_db, "EDFA noise figure [dB] or 'off'");
        app->add_option("--steps-per-span", steps_per_span, "SSFM steps per span");
        app->add_option("--wavelength", wavelength_nm, "center wavelength [nm]");
        app->add_option("--channels", channels, "number of WDM channels");
        app->add_option("--symbol-rate", symbol_rate_gbd, "symbol rate [GBd]");
        app->add_option("--spacing", spacing_ghz, "channel spacing [GHz]");
        app->add_option("--sps", sps, "samples per symbol");
        app->add_option("--rolloff", rolloff, "RRC roll-off");
    }
    void apply(FiberLink& l) const {
        if (beta2_ps2_km) l.beta2 = units::ps2_per_km_to_s2_per_m(*beta2_ps2_km);
        if (gamma_w_km) l.gamma = units::per_w_km_to_per_w_m(*gamma_w_km);
        if (alpha_db_km) l.alpha = units::db_per_km_to_per_m(*alpha_db_km);
        if (span_km) l.span_length = *span_km * 1e3;
        if (wavelength_nm) l.center_wavelength = *wavelength_nm * 1e-9;
        if (steps_per_span) l.steps_per_span = *steps_per_span;
        if (nf_db) {
            if (*nf_db == "off") {
                l.nf_db = -std::numeric_limits<double>::infinity();
            } else {
                try {
                    l.nf_db = std::stod(*nf_db);
                } catch (const std::exception&) {
                    throw InvalidInput("--nf must be a number or 'off'");
                }
            }
        }
    }
    template <typename C>
    void apply_wdm(C& c) const {
        if (channels) c.n_channels = *channels;
        if (symbol_rate_gbd) c.symbol_rate = *symbol_rate_gbd * 1e9;
        if (spacing_ghz) c.spacing = *spacing_ghz * 1e9;
        if (sps) c.sps = *sps;
        if (rolloff) c.rolloff = *rolloff;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic and geometric constellation shaping for nonlinear fiber links"};
    app.require_subcommand(1);

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "GMI / net rate sweep over launch power and distance");
    std::string eval_format = "pm32qam", eval_out = "eval_out", powers = "-4:6:0.5", spans = "25:88:3",
                targets = "400";
    std::uint64_t eval_seed = 1;
    std::size_t eval_symbols = 1 << 13;
    int eval_threads = 0;
    bool no_gain = false, no_guard = false;
    PhysicsFlags eval_phys;
    eval->add_option("--format", eval_format, "constellation file or baseline name");
    eval->add_option("--out", eval_out, "output directory");
    eval->add_option("--powers", powers, "launch powers [dBm], start:stop:step or a,b,c");
    eval->add_option("--spans", spans, "span counts, start:stop:step or a,b,c");
    eval->add_option("--targets", targets, "target net rates [Gbit/s] for the reach table");
    eval->add_option("--seed", eval_seed);
    eval->add_option("--symbols", eval_symbols, "symbols per channel per point");
    eval->add_option("--threads", eval_threads, "worker threads (default: FIBERSHAPE_THREADS or all cores)");
    eval->add_flag("--no-gain-correction", no_gain, "skip the per-polarization complex gain fit");
    eval->add_flag("--no-guard", no_guard, "keep the edge symbols");
    eval_phys.add(eval);

    // train
    auto* train = app.add_subcommand("train", "end-to-end constellation training");
    std::string train_out = "train_out", profile = "desk";
    std::optional<std::string> config_file;
    long long checkpoint_every = 500;
    bool verbose = false;
    std::optional<int> m, batch, symbols, n_spans, hidden;
    std::optional<double> lr, beta1, beta2, adam_eps, temperature, init_power, snr;
    std::optional<long long> iters;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> precision, channel;
    std::optional<bool> train_ps, train_power;
    PhysicsFlags train_phys;
    train->add_option("--config", config_file, "JSON config (as written to config.json)");
    train->add_option("--profile", profile, "desk | full | toy")->check(CLI::IsMember({"desk", "full", "toy"}));
    train->add_option("--out", train_out, "run directory");
    train->add_option("--checkpoint-every", checkpoint_every);
    train->add_flag("--verbose", verbose);
    train->add_option("--m", m, "bits per 4D symbol");
    train->add_option("--batch", batch, "waveform realizations per update");
    train->add_option("--symbols", symbols, "symbols per channel per realization");
    train->add_option("--train-spans", n_spans, "spans used during training");
    train->add_option("--hidden", hidden, "hidden layer width");
    train->add_option("--lr", lr);
    train->add_option("--beta1", beta1);
    train->add_option("--beta2-adam", beta2, "ADAM second-moment decay");
    train->add_option("--adam-eps", adam_eps);
    train->add_option("--temperature", temperature, "Gumbel-Softmax temperature");
    train->add_option("--initial-power", init_power, "initial launch power [dBm]");
    train->add_option("--snr", snr, "AWGN stand-in SNR per 2D [dB]");
    train->add_option("--iters", iters);
    train->add_option("--seed", seed);
    train->add_option("--precision", precision)->check(CLI::IsMember({"single", "double"}));
    train->add_option("--channel", channel, "fiber | awgn")->check(CLI::IsMember({"fiber", "awgn"}));
    train->add_option("--train-ps", train_ps, "learn symbol probabilities (true/false)");
    train->add_option("--train-power", train_power, "learn launch power (true/false)");
    train_phys.add(train);

    // energy-report
    auto* energy = app.add_subcommand("energy-report", "per-symbol energy table of a format");
    std::string energy_format;
    std::optional<std::string> energy_out;
    energy->add_option("format", energy_format, "constellation file or baseline name")->required();
    energy->add_option("--out", energy_out, "directory for energy.csv and energy_summary.csv (default: stdout)");

    // rrc-selftest
    auto* rrc = app.add_subcommand("rrc-selftest", "ISI of the RRC taps and loopback error");
    double rrc_rolloff = 0.01;
    int rrc_sps = 16, rrc_span = 128;
    std::size_t rrc_symbols = 1024;
    rrc->add_option("--rolloff", rrc_rolloff);
    rrc->add_option("--sps", rrc_sps);
    rrc->add_option("--span", rrc_span, "filter span [symbols]");
    rrc->add_option("--symbols", rrc_symbols);

    // grad-check
    auto* grad = app.add_subcommand("grad-check", "reverse-mode gradients vs central differences");
    int probes = 100;
    std::uint64_t grad_seed = 1;
    double grad_tol = 1e-5;
    grad->add_option("--probes", probes);
    grad->add_option("--seed", grad_seed);
    grad->add_option("--tolerance", grad_tol);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUser;
    }

    try {
        if (*eval) {
            EvalConfig cfg = EvalConfig::defaults();
            cfg.format = eval_format;
            cfg.powers_dbm = parse_grid(powers);
            cfg.spans.clear();
            for (double s : parse_grid(spans)) {
                require(s == std::floor(s), "span counts must be integers");
                cfg.spans.push_back(static_cast<int>(s));
            }
            cfg.target_rates_gbps = parse_grid(targets);
            cfg.point.seed = eval_seed;
            cfg.point.n_symbols = eval_symbols;
            cfg.point.gain_correction = !no_gain;
            cfg.point.discard_guard = !no_guard;
            cfg.threads = eval_threads;
            eval_phys.apply(cfg.link);
            eval_phys.apply_wdm(cfg.wdm);
            const auto r = cmd_evaluate(cfg, eval_out);
            for (const auto& b : r.best) {
                std::cout << b.n_spans << " spans: best power " << b.power_dbm << " dBm, GMI " << b.mean_gmi << " bit\n";
            }
            for (const auto& row : r.reach) {
                std::cout << "reach at " << row.target_rate_gbps << " Gbit/s: ";
                if (std::isnan(row.reach_km)) {
                    std::cout << "not bracketed\n";
                } else {
                    std::cout << row.reach_km << " km\n";
                }
            }
        } else if (*train) {
            TrainConfig cfg = profile == "full" ? TrainConfig::full()
                              : profile == "toy" ? TrainConfig::toy_awgn()
                                                 : TrainConfig::desk();
            if (config_file) {
                std::ifstream in(*config_file);
                require(static_cast<bool>(in), "cannot open config " + *config_file);
                nlohmann::json j;
                try {
                    j = nlohmann::json::parse(in);
                } catch (const nlohmann::json::exception& e) {
                    throw InvalidInput(std::string("config: ") + e.what());
                }
                cfg = train_config_from_json(j);
            }
            if (m) cfg.m = *m;
            if (batch) cfg.batch_items = *batch;
            if (symbols) cfg.symbols_per_channel = *symbols;
            if (n_spans) cfg.n_spans_train = *n_spans;
            if (hidden) cfg.hidden = *hidden;
            if (lr) cfg.lr = *lr;
            if (beta1) cfg.beta1 = *beta1;
            if (beta2) cfg.beta2 = *beta2;
            if (adam_eps) cfg.adam_eps = *adam_eps;
            if (temperature) cfg.temperature = *temperature;
            if (init_power) cfg.initial_power_dbm = *init_power;
            if (snr) cfg.awgn_snr_db = *snr;
            if (iters) cfg.max_iters = *iters;
            if (seed) cfg.seed = *seed;
            if (precision) cfg.precision = *precision == "single" ? Precision::Single : Precision::Double;
            if (channel) cfg.channel = *channel == "fiber" ? ChannelModel::Fiber : ChannelModel::Awgn;
            if (train_ps) cfg.train_ps = *train_ps;
            if (train_power) cfg.train_power = *train_power;
            train_phys.apply(cfg.link);
            train_phys.apply_wdm(cfg);
            cfg.validate();
            const auto f = run_training(cfg, train_out, checkpoint_every, verbose);
            for (std::size_t c = 0; c < f.formats.size(); ++c) {
                std::cout << "channel " << c << ": entropy " << entropy(f.formats[c]) << " bit, power "
                          << f.power_dbm[c] << " dBm\n";
            }
        } else if (*energy) {
            const auto r = energy_report(resolve_format(energy_format));
            if (energy_out) {
                std::filesystem::create_directories(*energy_out);
                std::ofstream(std::filesystem::path(*energy_out) / "energy.csv") << energy_csv(r);
                std::ofstream(std::filesystem::path(*energy_out) / "energy_summary.csv") << energy_summary_csv(r);
            } else {
                std::cout << energy_csv(r) << energy_summary_csv(r);
            }
        } else if (*rrc) {
            const auto r = rrc_selftest(rrc_rolloff, rrc_sps, rrc_span, rrc_symbols, 1);
            std::cout << "off-peak ISI " << r.isi_db << " dB, loopback max error " << r.loopback_max_error << '\n'
                      << (r.pass ? "PASS" : "FAIL") << '\n';
            return r.pass ? 0 : kExitNumerical;
        } else if (*grad) {
            bool ok = true;
            for (const auto& r : grad_check(probes, grad_seed)) {
                const bool pass = r.max_rel_error < grad_tol;
                ok = ok && pass;
                std::cout << (pass ? "PASS " : "FAIL ") << r.name << " max rel err " << r.max_rel_error << " over "
                          << r.probes << " probes\n";
            }
            return ok ? 0 : kExitNumerical;
        }
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUser;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUser;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUser;
    }
    return 0;
}
