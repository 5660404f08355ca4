#include "fibershape/harness.hpp"

#include "fibershape/error.hpp"
#include "fibershape/nn/dense.hpp"
#include "fibershape/random.hpp"
#include "fibershape/trainer.hpp"
#include "fibershape/units.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace fibershape {

int thread_count() {
    if (const char* env = std::getenv("FIBERSHAPE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& job) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                job(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n);
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(workers, n); ++t) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

Constellation4D resolve_format(const std::string& name) {
    if (std::filesystem::exists(name)) return load(name);
    try {
        return make_baseline(name);
    } catch (const InvalidInput&) {
        throw InvalidInput("format '" + name + "' is neither a readable constellation file nor a known baseline");
    }
}

// ---------------------------------------------------------------- evaluation

namespace {

std::uint64_t point_seed(std::uint64_t seed, double power_dbm, int n_spans) {
    return mix64(mix64(seed ^ 0x5EEDE7A1ULL) ^ mix64(std::bit_cast<std::uint64_t>(power_dbm)) ^
                 static_cast<std::uint64_t>(n_spans));
}

void correct_gain(std::vector<Point4>& rx, const std::vector<Point4>& tx, std::size_t begin, std::size_t end) {
    for (int pol = 0; pol < 2; ++pol) {
        std::complex<double> num = 0.0;
        double den = 0.0;
        for (std::size_t k = begin; k < end; ++k) {
            const std::complex<double> x(tx[k][2 * pol], tx[k][2 * pol + 1]);
            const std::complex<double> y(rx[k][2 * pol], rx[k][2 * pol + 1]);
            num += std::conj(x) * y;
            den += std::norm(x);
        }
        if (den <= 0.0 || std::abs(num) == 0.0) continue;
        const std::complex<double> g = num / den;
        for (auto& p : rx) {
            const std::complex<double> y = std::complex<double>(p[2 * pol], p[2 * pol + 1]) / g;
            p[2 * pol] = y.real();
            p[2 * pol + 1] = y.imag();
        }
    }
}

}  // namespace

PointResult evaluate_point(const Constellation4D& format, const WdmConfig& wdm, const FiberLink& link,
                           double power_dbm, const PointOptions& options) {
    validate(format, true);
    wdm.validate();
    link.validate();
    require(std::isfinite(power_dbm), "evaluate: launch power must be finite");
    require(options.n_symbols >= 16, "evaluate: need at least 16 symbols per channel");
    const RrcFilter filter = design_rrc(wdm.rolloff, wdm.sps);
    const std::size_t K = options.n_symbols;

    std::vector<std::vector<std::uint32_t>> indices(static_cast<std::size_t>(wdm.n_channels));
    std::vector<std::vector<Point4>> sent(static_cast<std::size_t>(wdm.n_channels));
    std::vector<DualPolWaveform<double>> launched;
    std::vector<double> scales;
    for (int c = 0; c < wdm.n_channels; ++c) {
        auto rng = substream(options.seed, 0xDA7A, static_cast<std::uint64_t>(c));
        std::discrete_distribution<std::uint32_t> pick(format.probs.begin(), format.probs.end());
        auto& idx = indices[static_cast<std::size_t>(c)];
        auto& sym = sent[static_cast<std::size_t>(c)];
        for (std::size_t k = 0; k < K; ++k) {
            idx.push_back(pick(rng));
            sym.push_back(format.points[idx.back()]);
        }
        auto w = modulate<double>(sym, filter, wdm.symbol_rate);
        scales.push_back(launch_scale(w, power_dbm));
        launched.push_back(set_launch_power(w, power_dbm));
    }
    // CDC on the whole field so every channel is compensated at its own frequency
    const auto rx_field = cd_compensate(propagate_link(wdm_mux<double>(launched, wdm), link,
                                                       point_seed(options.seed, power_dbm, link.n_spans)),
                                        link.beta2, link.total_length());
    launched.clear();

    std::size_t guard = 0;
    if (options.discard_guard) {
        guard = std::min(guard_symbols(filter.span_symbols, link.beta2, link.total_length(), wdm.symbol_rate), K / 4);
    }
    PointResult result;
    result.power_dbm = power_dbm;
    result.n_spans = link.n_spans;
    for (int c = 0; c < wdm.n_channels; ++c) {
        auto rx = matched_filter_downsample(wdm_demux(rx_field, wdm, c), filter, K);
        for (auto& p : rx) {
            for (auto& v : p) v /= scales[static_cast<std::size_t>(c)];
        }
        const auto& tx = sent[static_cast<std::size_t>(c)];
        if (options.gain_correction) correct_gain(rx, tx, guard, K - guard);
        const auto& idx = indices[static_cast<std::size_t>(c)];
        const std::span<const std::uint32_t> kept_idx(idx.data() + guard, K - 2 * guard);
        const std::span<const Point4> kept_rx(rx.data() + guard, K - 2 * guard);
        for (const auto& p : kept_rx) {
            for (double v : p) {
                if (!std::isfinite(v)) throw NumericalError("evaluate: non-finite received symbol");
            }
        }
        result.channels.push_back(gmi_aux_gaussian(format, kept_idx, kept_rx));
    }
    return result;
}

EvalConfig EvalConfig::defaults() {
    EvalConfig c;
    for (int i = 0; i <= 20; ++i) c.powers_dbm.push_back(-4.0 + 0.5 * i);
    for (int s = 25; s <= 88; s += 3) c.spans.push_back(s);
    if (c.spans.back() != 88) c.spans.push_back(88);
    c.target_rates_gbps = {400.0};
    return c;
}

nlohmann::json to_json(const EvalConfig& c) {
    nlohmann::json j;
    j["format"] = c.format;
    j["wdm"] = {{"n_channels", c.wdm.n_channels}, {"symbol_rate", c.wdm.symbol_rate}, {"spacing", c.wdm.spacing},
                {"sps", c.wdm.sps},           {"rolloff", c.wdm.rolloff}};
    j["fiber"] = {{"beta2", c.link.beta2},
                  {"gamma", c.link.gamma},
                  {"alpha", c.link.alpha},
                  {"span_length", c.link.span_length},
                  {"nf_db", c.link.ase_enabled() ? nlohmann::json(c.link.nf_db) : nlohmann::json("off")},
                  {"steps_per_span", c.link.steps_per_span},
                  {"center_wavelength", c.link.center_wavelength}};
    j["powers_dbm"] = c.powers_dbm;
    j["spans"] = c.spans;
    j["target_rates_gbps"] = c.target_rates_gbps;
    j["n_symbols"] = c.point.n_symbols;
    j["seed"] = c.point.seed;
    j["gain_correction"] = c.point.gain_correction;
    j["discard_guard"] = c.point.discard_guard;
    return j;
}

EvalResult run_evaluation(const EvalConfig& cfg) {
    require(!cfg.powers_dbm.empty() && !cfg.spans.empty(), "evaluate: empty power or span grid");
    for (int s : cfg.spans) require(s >= 0, "evaluate: span counts must be >= 0");
    const auto format = resolve_format(cfg.format);
    cfg.wdm.validate();

    struct Job {
        int spans;
        double power;
    };
    std::vector<Job> jobs;
    for (int s : cfg.spans) {
        for (double p : cfg.powers_dbm) jobs.push_back({s, p});
    }
    std::vector<PointResult> points(jobs.size());
    parallel_for(jobs.size(), cfg.threads > 0 ? cfg.threads : thread_count(), [&](std::size_t i) {
        FiberLink link = cfg.link;
        link.n_spans = jobs[i].spans;
        points[i] = evaluate_point(format, cfg.wdm, link, jobs[i].power, cfg.point);
    });

    EvalResult out;
    const int m = format.bits_per_symbol;
    for (const auto& pt : points) {
        for (std::size_t c = 0; c < pt.channels.size(); ++c) {
            const auto& g = pt.channels[c];
            GmiReport r;
            r.launch_power_dbm = pt.power_dbm;
            r.n_spans = pt.n_spans;
            r.channel = static_cast<int>(c);
            r.entropy = g.entropy;
            r.gmi = g.gmi;
            const auto ro = net_rate_and_oh(g.gmi, m, cfg.wdm.symbol_rate);
            r.net_rate_gbps = ro.net_rate / 1e9;
            r.fec_oh_percent = ro.fec_oh_percent;
            r.ci95 = g.ci95;
            out.rows.push_back(r);
        }
    }
    std::sort(out.rows.begin(), out.rows.end(), [](const GmiReport& a, const GmiReport& b) {
        return std::tie(a.n_spans, a.launch_power_dbm, a.channel) < std::tie(b.n_spans, b.launch_power_dbm, b.channel);
    });

    std::map<std::pair<int, double>, std::pair<double, int>> mean_gmi;
    for (const auto& r : out.rows) {
        auto& acc = mean_gmi[{r.n_spans, r.launch_power_dbm}];
        acc.first += r.gmi;
        acc.second += 1;
    }
    std::map<int, BestPower> best;
    for (const auto& [key, acc] : mean_gmi) {
        const double g = acc.first / acc.second;
        auto it = best.find(key.first);
        if (it == best.end() || g > it->second.mean_gmi) {
            BestPower b;
            b.n_spans = key.first;
            b.power_dbm = key.second;
            b.mean_gmi = g;
            b.net_rate_gbps = g * cfg.wdm.symbol_rate / 1e9;
            best[key.first] = b;
        }
    }
    for (const auto& [s, b] : best) out.best.push_back(b);

    // rate-vs-distance at the best power; Monte-Carlo wiggle removed by a
    // running minimum so the curve is non-increasing
    std::vector<std::pair<double, double>> curve;
    double floor = std::numeric_limits<double>::infinity();
    for (const auto& b : out.best) {
        floor = std::min(floor, b.net_rate_gbps);
        if (floor <= 0.0) break;
        const double km = b.n_spans * cfg.link.span_length / 1e3;
        if (!curve.empty() && km <= curve.back().first) continue;
        curve.emplace_back(km, floor);
    }
    for (double target : cfg.target_rates_gbps) {
        ReachRow row;
        row.target_rate_gbps = target;
        row.reach_km = std::numeric_limits<double>::quiet_NaN();
        if (!curve.empty() && target <= curve.front().second && target >= curve.back().second) {
            row.reach_km = reach_at_rate(curve, target);
        }
        out.reach.push_back(row);
    }
    return out;
}

EvalResult cmd_evaluate(const EvalConfig& cfg, const std::filesystem::path& out_dir) {
    auto result = run_evaluation(cfg);
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(out_dir / "report.csv", std::ios::trunc);
        out << "# " << kReportSchema << '\n' << report_csv_header() << '\n';
        for (const auto& r : result.rows) out << report_csv_row(r) << '\n';
    }
    {
        std::ofstream out(out_dir / "best_power.csv", std::ios::trunc);
        out << "# " << kReportSchema << "\nn_spans,distance_km,best_power_dbm,mean_gmi,net_rate_gbps\n";
        char buf[160];
        for (const auto& b : result.best) {
            std::snprintf(buf, sizeof buf, "%d,%.1f,%.3f,%.6f,%.4f\n", b.n_spans, b.n_spans * cfg.link.span_length / 1e3,
                          b.power_dbm, b.mean_gmi, b.net_rate_gbps);
            out << buf;
        }
    }
    {
        std::ofstream out(out_dir / "reach.csv", std::ios::trunc);
        out << "# " << kReportSchema << "\ntarget_rate_gbps,reach_km\n";
        for (const auto& r : result.reach) {
            out << r.target_rate_gbps << ',';
            if (std::isnan(r.reach_km)) {
                out << "none\n";
            } else {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.1f\n", r.reach_km);
                out << buf;
            }
        }
    }
    std::ofstream(out_dir / "config.json", std::ios::trunc) << to_json(cfg).dump(2) << '\n';
    return result;
}

// ---------------------------------------------------------------- energy report

EnergyReport energy_report(const Constellation4D& c) {
    validate(c);
    EnergyReport r;
    r.min = std::numeric_limits<double>::infinity();
    r.max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double e = energy(c.points[i]);
        r.rows.push_back({i, c.labels[i], e, c.probs[i]});
        r.min = std::min(r.min, e);
        r.max = std::max(r.max, e);
        r.mean += c.probs[i] * e;
    }
    for (const auto& row : r.rows) r.variance += row.probability * (row.energy - r.mean) * (row.energy - r.mean);
    return r;
}

std::string energy_csv(const EnergyReport& r) {
    std::ostringstream out;
    out << "# " << kEnergySchema << "\nindex,label,energy,probability\n";
    char buf[128];
    for (const auto& row : r.rows) {
        std::snprintf(buf, sizeof buf, "%zu,%u,%.12g,%.12g\n", row.index, row.label, row.energy, row.probability);
        out << buf;
    }
    return out.str();
}

std::string energy_summary_csv(const EnergyReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "# %s\nmin,max,mean,variance\n%.12g,%.12g,%.12g,%.12g\n", kEnergySchema, r.min, r.max,
                  r.mean, r.variance);
    return buf;
}

// ---------------------------------------------------------------- rrc self-test

RrcSelftest rrc_selftest(double rolloff, int sps, int span_symbols, std::size_t n_symbols, std::uint64_t seed) {
    const auto f = design_rrc(rolloff, sps, span_symbols);
    const auto& h = f.taps;
    const std::size_t n = h.size();
    std::vector<double> p(2 * n - 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) p[i + j] += h[i] * h[j];
    }
    const std::size_t center = n - 1;
    double worst = 0.0;
    for (std::size_t k = static_cast<std::size_t>(sps); k <= center; k += static_cast<std::size_t>(sps)) {
        worst = std::max({worst, std::abs(p[center + k]), std::abs(p[center - k])});
    }
    RrcSelftest r;
    r.isi_db = 20.0 * std::log10(std::max(worst, 1e-300) / std::abs(p[center]));

    auto rng = substream(seed, 0x5E1F);
    std::uniform_int_distribution<int> coin(0, 1);
    std::vector<Point4> sym(n_symbols);
    for (auto& s : sym) {
        for (auto& v : s) v = coin(rng) ? 0.5 : -0.5;
    }
    const auto back = matched_filter_downsample(modulate<double>(sym, f, 50e9), f, n_symbols);
    for (std::size_t k = 0; k < n_symbols; ++k) {
        for (int d = 0; d < 4; ++d) r.loopback_max_error = std::max(r.loopback_max_error, std::abs(back[k][d] - sym[k][d]));
    }
    r.pass = r.isi_db < -40.0 && r.loopback_max_error < 1e-6;
    return r;
}

// ---------------------------------------------------------------- gradient check

namespace {

using Md = nn::Matrix<double>;
using Td = nn::Tensor<double>;
using GraphFn = std::function<Td(const std::vector<Td>&)>;

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

Md random_matrix(Eigen::Index r, Eigen::Index c, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    Md m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

// Loss = Σ W ∘ f(inputs) with fixed random W.
GradCheckResult check_graph(const std::string& name, std::vector<Md> inputs, const GraphFn& f, int probes,
                            std::mt19937_64& rng) {
    auto build = [&](const std::vector<Md>& values, Md* weights) {
        std::vector<Td> ts;
        for (const auto& v : values) ts.push_back(Td::parameter(v));
        auto out = f(ts);
        if (weights->size() == 0) *weights = random_matrix(out.rows(), out.cols(), -1.0, 1.0, rng);
        return std::make_pair(ts, nn::sum(nn::mul(out, Td::constant(*weights))));
    };
    Md weights;
    auto [params, loss] = build(inputs, &weights);
    nn::backward(loss);
    GradCheckResult res{name, probes, 0.0};
    const double h = 1e-6;
    for (int p = 0; p < probes; ++p) {
        const auto ti = std::uniform_int_distribution<std::size_t>(0, inputs.size() - 1)(rng);
        const auto ei = std::uniform_int_distribution<Eigen::Index>(0, inputs[ti].size() - 1)(rng);
        const double analytic = params[ti].grad().data()[ei];
        auto plus = inputs;
        plus[ti].data()[ei] += h;
        auto minus = inputs;
        minus[ti].data()[ei] -= h;
        const double fp = build(plus, &weights).second.item();
        const double fm = build(minus, &weights).second.item();
        res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic, (fp - fm) / (2 * h)));
    }
    return res;
}

GradCheckResult check_ssfm(int probes, std::mt19937_64& rng) {
    const std::size_t n = 64;
    FiberLink link = FiberLink::standard(1);
    link.steps_per_span = 8;
    DualPolWaveform<double> w;
    w.sample_rate = 200e9;
    std::normal_distribution<double> g(0.0, std::sqrt(0.5e-2));
    for (std::size_t i = 0; i < n; ++i) {
        w.x.emplace_back(g(rng), g(rng));
        w.y.emplace_back(g(rng), g(rng));
    }
    DualPolWaveform<double> c = w;
    std::normal_distribution<double> gw(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        c.x[i] = {gw(rng), gw(rng)};
        c.y[i] = {gw(rng), gw(rng)};
    }
    auto loss = [&](DualPolWaveform<double> in) {
        ssfm_span(in, link);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += (std::conj(c.x[i]) * in.x[i]).real() + (std::conj(c.y[i]) * in.y[i]).real();
        return acc;
    };
    SsfmTape<double> tape;
    auto fwd = w;
    ssfm_span(fwd, link, &tape);
    const auto grad = ssfm_span_backward(tape, c);
    GradCheckResult res{"ssfm_span", probes, 0.0};
    const double h = 1e-6;
    for (int p = 0; p < probes; ++p) {
        const auto i = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        const int which = std::uniform_int_distribution<int>(0, 3)(rng);
        const std::complex<double> dir = (which & 1) ? std::complex<double>(0.0, h) : std::complex<double>(h, 0.0);
        auto plus = w, minus = w;
        auto& fp = (which & 2) ? plus.y[i] : plus.x[i];
        auto& fm = (which & 2) ? minus.y[i] : minus.x[i];
        fp += dir;
        fm -= dir;
        const double fd = (loss(plus) - loss(minus)) / (2 * h);
        const auto gz = (which & 2) ? grad.y[i] : grad.x[i];
        const double analytic = (which & 1) ? gz.imag() : gz.real();
        res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic, fd));
    }
    return res;
}

}  // namespace

std::vector<GradCheckResult> grad_check(int probes, std::uint64_t seed) {
    require(probes >= 1, "grad-check: probes must be positive");
    auto rng = substream(seed, 0x6AD);
    std::vector<GradCheckResult> out;
    auto R = [&](Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) { return random_matrix(r, c, lo, hi, rng); };
    out.push_back(check_graph("add", {R(4, 3), R(4, 3)}, [](auto& t) { return nn::add(t[0], t[1]); }, probes, rng));
    out.push_back(check_graph("sub", {R(4, 3), R(4, 3)}, [](auto& t) { return nn::sub(t[0], t[1]); }, probes, rng));
    out.push_back(check_graph("mul", {R(4, 3), R(4, 3)}, [](auto& t) { return nn::mul(t[0], t[1]); }, probes, rng));
    out.push_back(check_graph("scale", {R(4, 3)}, [](auto& t) { return nn::scale(t[0], -1.7); }, probes, rng));
    out.push_back(check_graph("add_row", {R(5, 3), R(1, 3)}, [](auto& t) { return nn::add_row(t[0], t[1]); }, probes, rng));
    out.push_back(check_graph("mul_scalar", {R(4, 3), R(1, 1)}, [](auto& t) { return nn::mul_scalar(t[0], t[1]); }, probes, rng));
    out.push_back(check_graph("matmul", {R(4, 5), R(5, 3)}, [](auto& t) { return nn::matmul(t[0], t[1]); }, probes, rng));
    out.push_back(check_graph("affine", {R(6, 4), R(3, 4), R(1, 3)}, [](auto& t) { return nn::affine(t[0], t[1], t[2]); },
                              probes, rng));
    out.push_back(check_graph("relu", {R(6, 5)}, [](auto& t) { return nn::relu(t[0]); }, probes, rng));
    out.push_back(check_graph("sigmoid", {R(6, 5, -3, 3)}, [](auto& t) { return nn::sigmoid(t[0]); }, probes, rng));
    out.push_back(check_graph("exp", {R(6, 5)}, [](auto& t) { return nn::exp(t[0]); }, probes, rng));
    out.push_back(check_graph("log", {R(6, 5, 0.5, 2.0)}, [](auto& t) { return nn::log(t[0]); }, probes, rng));
    out.push_back(check_graph("sqrt", {R(6, 5, 0.5, 2.0)}, [](auto& t) { return nn::sqrt(t[0]); }, probes, rng));
    out.push_back(check_graph("square", {R(6, 5)}, [](auto& t) { return nn::square(t[0]); }, probes, rng));
    out.push_back(check_graph("sum", {R(6, 5)}, [](auto& t) { return nn::sum(t[0]); }, probes, rng));
    out.push_back(check_graph("mean", {R(6, 5)}, [](auto& t) { return nn::mean(t[0]); }, probes, rng));
    out.push_back(check_graph("softmax_rows", {R(3, 8, -2, 2)}, [](auto& t) { return nn::softmax_rows(t[0]); }, probes, rng));
    out.push_back(check_graph("log_softmax_rows", {R(3, 8, -2, 2)}, [](auto& t) { return nn::log_softmax_rows(t[0]); },
                              probes, rng));
    out.push_back(check_graph("diagonal", {R(6, 6)}, [](auto& t) { return nn::diagonal(t[0]); }, probes, rng));
    out.push_back(check_graph("slice_rows", {R(8, 3)}, [](auto& t) { return nn::slice_rows(t[0], 2, 4); }, probes, rng));
    out.push_back(check_graph("column", {R(8, 3)}, [](auto& t) { return nn::column(t[0], 1); }, probes, rng));
    {
        Md onehot = Md::Zero(6, 5);
        for (Eigen::Index r = 0; r < 6; ++r) onehot(r, r % 5) = 1.0;
        out.push_back(check_graph("softmax_cross_entropy", {R(6, 5, -2, 2)},
                                  [onehot](auto& t) {
                                      return nn::scale(nn::sum(nn::mul(nn::log_softmax_rows(t[0]), Td::constant(onehot))),
                                                       -1.0);
                                  },
                                  probes, rng));
        Md bits(7, 1);
        for (Eigen::Index r = 0; r < 7; ++r) bits(r, 0) = static_cast<double>(r % 2);
        out.push_back(check_graph("binary_log_likelihood", {R(7, 1, -4, 4)},
                                  [bits](auto& t) { return nn::binary_log_likelihood(t[0], bits); }, probes, rng));
    }
    {
        auto net_rng = substream(seed, 0x4E7);
        const auto net = nn::make_demapper_net<double>(16, net_rng);
        const auto params = net.parameters();
        std::vector<Md> values{R(5, 4)};
        for (const auto& p : params) values.push_back(p.value());
        out.push_back(check_graph("dense_net",
                                  values,
                                  [net](auto& t) {
                                      auto copy = net;
                                      // rebind the copy's layers to the probe tensors
                                      std::size_t k = 1;
                                      for (auto& l : copy.layers()) {
                                          l.weight = t[k++];
                                          l.bias = t[k++];
                                      }
                                      return copy.forward(t[0]);
                                  },
                                  probes, rng));
    }
    out.push_back(check_ssfm(probes, rng));
    {
        WdmConfig wdm;
        wdm.n_channels = 1;
        wdm.sps = 4;
        FiberLink link = FiberLink::standard(2);
        link.steps_per_span = 4;
        out.push_back(check_graph("fiber_channel", {R(16, 4, -0.5, 0.5), Md::Constant(1, 1, 3.0)},
                                  [wdm, link](auto& t) {
                                      return fiber_channel<double>({t[0]}, {t[1]}, wdm, link, 7).front();
                                  },
                                  probes, rng));
        WdmConfig two = wdm;
        two.n_channels = 2;
        two.sps = 8;
        out.push_back(check_graph("fiber_channel_wdm",
                                  {R(16, 4, -0.5, 0.5), R(16, 4, -0.5, 0.5), Md::Constant(1, 1, 3.0),
                                   Md::Constant(1, 1, 1.0)},
                                  [two, link](auto& t) {
                                      const auto y = fiber_channel<double>({t[0], t[1]}, {t[2], t[3]}, two, link, 7);
                                      return nn::add(y[0], nn::scale(y[1], 0.7));
                                  },
                                  probes, rng));
    }
    return out;
}

}  // namespace fibershape
