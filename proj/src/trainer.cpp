#include "fibershape/trainer.hpp"

#include "fibershape/error.hpp"
#include "fibershape/random.hpp"
#include "fibershape/units.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>

namespace fibershape {
namespace {

using nn::Matrix;
using nn::Tensor;

template <typename T>
std::vector<Point4> to_points(const Matrix<T>& m) {
    std::vector<Point4> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (int d = 0; d < 4; ++d) out[static_cast<std::size_t>(r)][d] = static_cast<double>(m(r, d));
    }
    return out;
}

template <typename T>
Matrix<T> from_points(const std::vector<Point4>& p) {
    Matrix<T> m(static_cast<Eigen::Index>(p.size()), 4);
    for (std::size_t r = 0; r < p.size(); ++r) {
        for (int d = 0; d < 4; ++d) m(static_cast<Eigen::Index>(r), d) = static_cast<T>(p[r][d]);
    }
    return m;
}

template <typename T>
double real_dot(const DualPolWaveform<T>& a, const DualPolWaveform<T>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += static_cast<double>((std::conj(a.x[i]) * b.x[i]).real() + (std::conj(a.y[i]) * b.y[i]).real());
    }
    return acc;
}

std::uint64_t noise_seed(std::uint64_t seed, long long iteration, int item) {
    return mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(iteration)) ^ (static_cast<std::uint64_t>(item) + 77));
}

std::string precision_name(Precision p) { return p == Precision::Single ? "single" : "double"; }
std::string channel_name(ChannelModel c) { return c == ChannelModel::Fiber ? "fiber" : "awgn"; }

template <typename T>
DenseWeights export_weights(const nn::DenseNet<T>& net) {
    DenseWeights w;
    for (const auto& l : net.layers()) {
        DenseWeights::Layer out;
        out.in = static_cast<int>(l.in_dim());
        out.out = static_cast<int>(l.out_dim());
        out.activation = l.activation;
        const auto& wv = l.weight.value();
        const auto& bv = l.bias.value();
        out.weight.assign(wv.data(), wv.data() + wv.size());
        out.bias.assign(bv.data(), bv.data() + bv.size());
        w.layers.push_back(std::move(out));
    }
    return w;
}

}  // namespace

// ---------------------------------------------------------------- config

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::full() {
    TrainConfig c;
    c.m = 10;
    c.n_channels = 5;
    c.n_spans_train = 50;
    c.batch_items = 2;
    c.symbols_per_channel = 1 << 13;
    c.max_iters = 300000;
    c.precision = Precision::Single;
    c.sps = 16;
    c.link = FiberLink::standard(50);
    c.link.steps_per_span = 25;
    return c;
}

TrainConfig TrainConfig::toy_awgn(double snr_db) {
    TrainConfig c;
    c.m = 4;
    c.n_channels = 1;
    c.channel = ChannelModel::Awgn;
    c.awgn_snr_db = snr_db;
    c.batch_items = 1;
    c.symbols_per_channel = 1024;
    c.max_iters = 5000;
    c.precision = Precision::Single;
    return c;
}

WdmConfig TrainConfig::wdm() const {
    WdmConfig w;
    w.n_channels = n_channels;
    w.symbol_rate = symbol_rate;
    w.spacing = spacing;
    w.sps = sps;
    w.rolloff = rolloff;
    return w;
}

FiberLink TrainConfig::train_link() const {
    FiberLink l = link;
    l.n_spans = n_spans_train;
    return l;
}

void TrainConfig::validate() const {
    require(m >= 1 && m <= 12, "train config: m must be in [1, 12]");
    require(n_channels >= 1, "train config: n_channels must be positive");
    require(n_spans_train >= 0, "train config: n_spans_train must be >= 0");
    require(batch_items >= 1, "train config: batch_items must be positive");
    require(symbols_per_channel >= 1, "train config: symbols_per_channel must be positive");
    require(lr > 0.0 && beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && adam_eps > 0.0,
            "train config: invalid ADAM hyperparameters");
    require(max_iters >= 0, "train config: max_iters must be >= 0");
    require(temperature > 0.0, "train config: temperature must be positive");
    require(hidden >= 1, "train config: hidden width must be positive");
    require(std::isfinite(initial_power_dbm), "train config: initial power must be finite");
    if (channel == ChannelModel::Fiber) {
        wdm().validate();
        train_link().validate();
    } else {
        require(std::isfinite(awgn_snr_db), "train config: AWGN SNR must be finite");
    }
}

nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["m"] = c.m;
    j["n_channels"] = c.n_channels;
    j["n_spans_train"] = c.n_spans_train;
    j["batch_items"] = c.batch_items;
    j["symbols_per_channel"] = c.symbols_per_channel;
    j["lr"] = c.lr;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["adam_eps"] = c.adam_eps;
    j["max_iters"] = c.max_iters;
    j["precision"] = precision_name(c.precision);
    j["temperature"] = c.temperature;
    j["seed"] = c.seed;
    j["hidden"] = c.hidden;
    j["train_ps"] = c.train_ps;
    j["train_power"] = c.train_power;
    j["initial_power_dbm"] = c.initial_power_dbm;
    j["channel"] = channel_name(c.channel);
    j["awgn_snr_db"] = c.awgn_snr_db;
    j["symbol_rate"] = c.symbol_rate;
    j["spacing"] = c.spacing;
    j["sps"] = c.sps;
    j["rolloff"] = c.rolloff;
    j["fiber"] = {{"beta2", c.link.beta2},
                  {"gamma", c.link.gamma},
                  {"alpha", c.link.alpha},
                  {"span_length", c.link.span_length},
                  {"nf_db", c.link.ase_enabled() ? nlohmann::json(c.link.nf_db) : nlohmann::json("off")},
                  {"steps_per_span", c.link.steps_per_span},
                  {"center_wavelength", c.link.center_wavelength}};
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("m", c.m);
        get("n_channels", c.n_channels);
        get("n_spans_train", c.n_spans_train);
        get("batch_items", c.batch_items);
        get("symbols_per_channel", c.symbols_per_channel);
        get("lr", c.lr);
        get("beta1", c.beta1);
        get("beta2", c.beta2);
        get("adam_eps", c.adam_eps);
        get("max_iters", c.max_iters);
        get("temperature", c.temperature);
        get("seed", c.seed);
        get("hidden", c.hidden);
        get("train_ps", c.train_ps);
        get("train_power", c.train_power);
        get("initial_power_dbm", c.initial_power_dbm);
        get("awgn_snr_db", c.awgn_snr_db);
        get("symbol_rate", c.symbol_rate);
        get("spacing", c.spacing);
        get("sps", c.sps);
        get("rolloff", c.rolloff);
        if (j.contains("precision")) {
            const auto p = j.at("precision").get<std::string>();
            require(p == "single" || p == "double", "train config: precision must be 'single' or 'double'");
            c.precision = p == "single" ? Precision::Single : Precision::Double;
        }
        if (j.contains("channel")) {
            const auto ch = j.at("channel").get<std::string>();
            require(ch == "fiber" || ch == "awgn", "train config: channel must be 'fiber' or 'awgn'");
            c.channel = ch == "fiber" ? ChannelModel::Fiber : ChannelModel::Awgn;
        }
        if (j.contains("fiber")) {
            const auto& f = j.at("fiber");
            auto getf = [&](const char* key, auto& field) {
                if (f.contains(key)) field = f.at(key).get<std::decay_t<decltype(field)>>();
            };
            getf("beta2", c.link.beta2);
            getf("gamma", c.link.gamma);
            getf("alpha", c.link.alpha);
            getf("span_length", c.link.span_length);
            getf("steps_per_span", c.link.steps_per_span);
            getf("center_wavelength", c.link.center_wavelength);
            if (f.contains("nf_db")) {
                const auto& nf = f.at("nf_db");
                c.link.nf_db = nf.is_string() ? -std::numeric_limits<double>::infinity() : nf.get<double>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------- models

template <typename T>
std::vector<Tensor<T>> ModelSet<T>::parameters() const {
    std::vector<Tensor<T>> p;
    for (const auto& c : channels) {
        for (auto& t : c.ps.parameters()) p.push_back(t);
        for (auto& t : c.gs.parameters()) p.push_back(t);
        for (const auto& d : c.demappers) {
            for (auto& t : d.parameters()) p.push_back(t);
        }
        p.push_back(c.power_dbm);
    }
    return p;
}

template <typename T>
std::size_t ModelSet<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : parameters()) n += static_cast<std::size_t>(t.value().size());
    return n;
}

template <typename T>
ModelSet<T> build_models(const TrainConfig& cfg) {
    cfg.validate();
    ModelSet<T> set;
    const int M = cfg.n_symbols();
    for (int c = 0; c < cfg.n_channels; ++c) {
        auto rng = substream(cfg.seed, 0xB111D, static_cast<std::uint64_t>(c));
        ChannelModels<T> ch;
        ch.ps = nn::make_ps_net<T>(M, cfg.hidden, rng);
        ch.gs = nn::make_gs_net<T>(M, cfg.hidden, rng);
        for (int i = 0; i < cfg.m; ++i) ch.demappers.push_back(nn::make_demapper_net<T>(cfg.hidden, rng));
        if (!cfg.train_ps) {
            // uniform and frozen: zero output layer gives equal logits
            auto& last = ch.ps.layers().back();
            last.weight.mutable_value().setZero();
            last.bias.mutable_value().setZero();
        }
        ch.power_dbm = Tensor<T>::parameter(Matrix<T>::Constant(1, 1, static_cast<T>(cfg.initial_power_dbm)));
        set.channels.push_back(std::move(ch));
    }
    return set;
}

// ---------------------------------------------------------------- channel op

template <typename T>
std::vector<Tensor<T>> fiber_channel(const std::vector<Tensor<T>>& symbols, const std::vector<Tensor<T>>& power_dbm,
                                     const WdmConfig& wdm, const FiberLink& link, std::uint64_t seed) {
    wdm.validate();
    link.validate();
    const int C = wdm.n_channels;
    require(static_cast<int>(symbols.size()) == C && static_cast<int>(power_dbm.size()) == C,
            "fiber_channel: need one symbol block and one power per channel");
    const Eigen::Index K = symbols.front().rows();
    for (int c = 0; c < C; ++c) {
        require(symbols[c].rows() == K && symbols[c].cols() == 4, "fiber_channel: symbol blocks must be K×4");
        require(power_dbm[c].rows() == 1 && power_dbm[c].cols() == 1, "fiber_channel: power must be 1×1");
    }
    const RrcFilter filter = design_rrc(wdm.rolloff, wdm.sps);
    const double total_length = link.total_length();

    struct State {
        std::vector<DualPolWaveform<T>> unscaled;
        std::vector<double> mean_power;
        std::vector<double> scale;
        LinkTape<T> tape;
        Matrix<T> out;
    };
    auto st = std::make_shared<State>();
    std::vector<DualPolWaveform<T>> launched;
    for (int c = 0; c < C; ++c) {
        auto u = modulate<T>(to_points(symbols[c].value()), filter, wdm.symbol_rate);
        const double pm = u.mean_power();
        require(pm > 0.0, "fiber_channel: zero-power channel");
        const double s = std::sqrt(units::dbm_to_watt(static_cast<double>(power_dbm[c].value()(0, 0))) / pm);
        DualPolWaveform<T> v = u;
        for (auto& z : v.x) z *= static_cast<T>(s);
        for (auto& z : v.y) z *= static_cast<T>(s);
        st->unscaled.push_back(std::move(u));
        st->mean_power.push_back(pm);
        st->scale.push_back(s);
        launched.push_back(std::move(v));
    }
    const auto muxed = wdm_mux<T>(launched, wdm);
    launched.clear();
    const auto received = cd_compensate(propagate_link_recorded(muxed, link, seed, st->tape), link.beta2, total_length);
    st->out.resize(C * K, 4);
    for (int c = 0; c < C; ++c) {
        const auto rx = matched_filter_downsample(wdm_demux(received, wdm, c), filter, static_cast<std::size_t>(K));
        Matrix<T> y = from_points<T>(rx) / static_cast<T>(st->scale[c]);
        st->out.middleRows(c * K, K) = y;
    }
    if (!st->out.allFinite()) throw NumericalError("fiber_channel: non-finite received symbols");

    std::vector<Tensor<T>> inputs = symbols;
    inputs.insert(inputs.end(), power_dbm.begin(), power_dbm.end());
    const double sample_rate = wdm.sample_rate();
    auto joint = nn::custom_op<T>(inputs, st->out, [st, wdm, link, filter, K, C, total_length,
                                                     sample_rate](const Matrix<T>& g) {
        const auto n_samples = st->unscaled.front().size();
        DualPolWaveform<T> g_out;
        g_out.sample_rate = sample_rate;
        g_out.x.assign(n_samples, {});
        g_out.y.assign(n_samples, {});
        std::vector<double> ds(static_cast<std::size_t>(C), 0.0);
        for (int c = 0; c < C; ++c) {
            const auto gy = g.middleRows(c * K, K);
            const auto y = st->out.middleRows(c * K, K);
            const double s = st->scale[c];
            // y = r / s
            ds[c] -= static_cast<double>(gy.cwiseProduct(y).sum()) / s;
            const Matrix<T> gr = gy / static_cast<T>(s);
            auto ge = matched_filter_adjoint<T>(to_points(gr), filter, n_samples, sample_rate);
            auto gw = C == 1 ? ge : frequency_shift(ge, wdm_offset(wdm, c, n_samples));
            for (std::size_t i = 0; i < n_samples; ++i) {
                g_out.x[i] += gw.x[i];
                g_out.y[i] += gw.y[i];
            }
        }
        // adjoint of CDC is the forward dispersion
        const auto g_in = propagate_link_backward(st->tape, propagate_linear(g_out, link.beta2, total_length));
        std::vector<Matrix<T>> grads(static_cast<std::size_t>(2 * C));
        for (int c = 0; c < C; ++c) {
            const auto gv = C == 1 ? g_in : frequency_shift(g_in, -wdm_offset(wdm, c, n_samples));
            const auto& u = st->unscaled[c];
            const double s = st->scale[c];
            ds[c] += real_dot(gv, u);
            // s = sqrt(P / Pm(u)):  ∂s/∂u = -s u / (Pm N)
            const double k = ds[c] * s / (st->mean_power[c] * static_cast<double>(u.size()));
            DualPolWaveform<T> gu = gv;
            for (std::size_t i = 0; i < u.size(); ++i) {
                gu.x[i] = static_cast<T>(s) * gv.x[i] - static_cast<T>(k) * u.x[i];
                gu.y[i] = static_cast<T>(s) * gv.y[i] - static_cast<T>(k) * u.y[i];
            }
            grads[static_cast<std::size_t>(c)] = from_points<T>(modulate_adjoint(gu, filter));
            Matrix<T> gp(1, 1);
            gp(0, 0) = static_cast<T>(ds[c] * s * std::numbers::ln10 / 20.0);
            grads[static_cast<std::size_t>(C + c)] = gp;
        }
        return grads;
    });
    std::vector<Tensor<T>> out;
    for (int c = 0; c < C; ++c) out.push_back(nn::slice_rows(joint, c * K, K));
    return out;
}

// ---------------------------------------------------------------- trainer

template <typename T>
Trainer<T>::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), models_(build_models<T>(cfg_)) {}

template <typename T>
std::vector<Tensor<T>> Trainer<T>::trainable() const {
    std::vector<Tensor<T>> p;
    for (const auto& c : models_.channels) {
        if (cfg_.train_ps) {
            for (auto& t : c.ps.parameters()) p.push_back(t);
        }
        for (auto& t : c.gs.parameters()) p.push_back(t);
        for (const auto& d : c.demappers) {
            for (auto& t : d.parameters()) p.push_back(t);
        }
        if (cfg_.train_power && cfg_.channel == ChannelModel::Fiber) p.push_back(c.power_dbm);
    }
    return p;
}

template <typename T>
typename Trainer<T>::Forward Trainer<T>::forward(long long iteration) const {
    const int M = cfg_.n_symbols();
    const int m = cfg_.m;
    const int C = cfg_.n_channels;
    const auto K = static_cast<Eigen::Index>(cfg_.symbols_per_channel);
    const auto eye = Tensor<T>::constant(Matrix<T>::Identity(M, M));
    const T inv_ln2 = static_cast<T>(1.0 / std::numbers::ln2);

    std::vector<Tensor<T>> logits(C), entropy_bits(C), points(C);
    for (int c = 0; c < C; ++c) {
        const auto& ch = models_.channels[static_cast<std::size_t>(c)];
        logits[c] = nn::diagonal(ch.ps.forward(eye));
        const auto logp = nn::log_softmax_rows(logits[c]);
        const auto p = nn::exp(logp);
        entropy_bits[c] = nn::scale(nn::sum(nn::mul(p, logp)), -inv_ln2);
        const auto raw = ch.gs.forward(eye);
        const auto energy = nn::sum(nn::matmul(p, nn::square(raw)));
        const auto inv_norm = nn::exp(nn::scale(nn::log(energy), T(-0.5)));
        points[c] = nn::mul_scalar(raw, inv_norm);
    }

    Forward out;
    out.channel_gmi.assign(static_cast<std::size_t>(C), 0.0);
    Tensor<T> total;
    for (int b = 0; b < cfg_.batch_items; ++b) {
        std::vector<Tensor<T>> sent(C);
        std::vector<std::vector<int>> indices(C);
        for (int c = 0; c < C; ++c) {
            auto rng = substream(cfg_.seed, static_cast<std::uint64_t>(iteration), 1000 + static_cast<std::uint64_t>(b),
                                 static_cast<std::uint64_t>(c));
            auto draw = nn::gumbel_softmax_st(logits[c], static_cast<std::size_t>(K), cfg_.temperature, rng);
            sent[c] = nn::matmul(draw.one_hot, points[c]);
            indices[c] = std::move(draw.indices);
        }
        std::vector<Tensor<T>> received(C);
        if (cfg_.channel == ChannelModel::Awgn) {
            const double snr = units::db_to_linear(cfg_.awgn_snr_db);
            const double sd = std::sqrt(1.0 / (4.0 * snr));
            for (int c = 0; c < C; ++c) {
                auto rng = substream(cfg_.seed, static_cast<std::uint64_t>(iteration), 5000 + static_cast<std::uint64_t>(b),
                                     static_cast<std::uint64_t>(c));
                Matrix<T> noise(K, 4);
                for (Eigen::Index i = 0; i < noise.size(); i += 2) {
                    double second = 0.0;
                    noise.data()[i] = static_cast<T>(sd * standard_normal_pair(rng, second));
                    if (i + 1 < noise.size()) noise.data()[i + 1] = static_cast<T>(sd * second);
                }
                received[c] = nn::add(sent[c], Tensor<T>::constant(std::move(noise)));
            }
        } else {
            std::vector<Tensor<T>> powers;
            for (const auto& ch : models_.channels) {
                powers.push_back(cfg_.train_power ? ch.power_dbm : Tensor<T>::constant(ch.power_dbm.value()));
            }
            received = fiber_channel<T>(sent, powers, cfg_.wdm(), cfg_.train_link(),
                                        noise_seed(cfg_.seed, iteration, b));
        }
        for (int c = 0; c < C; ++c) {
            const auto& ch = models_.channels[static_cast<std::size_t>(c)];
            Tensor<T> ll;
            for (int i = 0; i < m; ++i) {
                Matrix<T> bits(K, 1);
                for (Eigen::Index k = 0; k < K; ++k) {
                    bits(k, 0) = static_cast<T>((indices[c][static_cast<std::size_t>(k)] >> (m - 1 - i)) & 1);
                }
                const auto term = nn::binary_log_likelihood(ch.demappers[static_cast<std::size_t>(i)]
                                                                .forward_pre_activation(received[c]),
                                                            bits);
                ll = ll.defined() ? nn::add(ll, term) : term;
            }
            const auto gmi = nn::add(entropy_bits[c], nn::scale(ll, inv_ln2 / static_cast<T>(K)));
            out.channel_gmi[static_cast<std::size_t>(c)] += static_cast<double>(gmi.item()) / cfg_.batch_items;
            total = total.defined() ? nn::add(total, gmi) : gmi;
        }
    }
    out.loss = nn::scale(total, static_cast<T>(-1.0 / cfg_.batch_items));
    return out;
}

template <typename T>
StepResult Trainer<T>::step() {
    StepResult r;
    r.iteration = iteration_;
    const auto params = trainable();
    for (auto p : models_.parameters()) p.zero_grad();
    Forward f;
    bool finite = true;
    try {
        f = forward(iteration_);
        finite = std::isfinite(static_cast<double>(f.loss.item()));
    } catch (const NumericalError&) {
        finite = false;
    }
    if (!finite) {
        r.aborted = true;
        r.loss = std::numeric_limits<double>::quiet_NaN();
        ++iteration_;
        if (++consecutive_aborts_ >= 3) {
            throw NumericalError("training halted: non-finite loss for 3 consecutive iterations (last " +
                                 std::to_string(r.iteration) + ")");
        }
        std::cerr << "iteration " << r.iteration << ": non-finite loss, step aborted\n";
        return r;
    }
    consecutive_aborts_ = 0;
    nn::backward(f.loss);
    nn::AdamConfig ac{cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps};
    nn::adam_step<T>(params, adam_, ac);
    for (const auto& p : params) {
        if (!p.value().allFinite()) {
            throw NumericalError("training: non-finite parameter after iteration " + std::to_string(r.iteration));
        }
    }
    r.loss = static_cast<double>(f.loss.item());
    r.channel_gmi = f.channel_gmi;
    history_.push_back({iteration_, r.loss, r.channel_gmi});
    ++iteration_;
    return r;
}

template <typename T>
Constellation4D Trainer<T>::current_constellation(int channel) const {
    require(channel >= 0 && channel < cfg_.n_channels, "channel index out of range");
    const auto& ch = models_.channels[static_cast<std::size_t>(channel)];
    const int M = cfg_.n_symbols();
    const Matrix<T> eye = Matrix<T>::Identity(M, M);
    const Matrix<T> ps = nn::evaluate(ch.ps, eye);
    const Matrix<T> gs = nn::evaluate(ch.gs, eye);
    Constellation4D c;
    c.bits_per_symbol = cfg_.m;
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < M; ++i) mx = std::max(mx, static_cast<double>(ps(i, i)));
    double z = 0.0;
    for (int i = 0; i < M; ++i) {
        c.probs.push_back(std::exp(static_cast<double>(ps(i, i)) - mx));
        z += c.probs.back();
        c.points.push_back({static_cast<double>(gs(i, 0)), static_cast<double>(gs(i, 1)), static_cast<double>(gs(i, 2)),
                            static_cast<double>(gs(i, 3))});
        c.labels.push_back(static_cast<std::uint32_t>(i));
    }
    for (auto& p : c.probs) p /= z;
    return normalize(c);
}

template <typename T>
LearnedFormat Trainer<T>::extract_format() const {
    LearnedFormat f;
    for (int c = 0; c < cfg_.n_channels; ++c) {
        auto con = current_constellation(c);
        validate(con, true);
        f.degenerate.push_back(min_distance(con) < 1e-6);
        f.formats.push_back(std::move(con));
        const auto& ch = models_.channels[static_cast<std::size_t>(c)];
        f.power_dbm.push_back(static_cast<double>(ch.power_dbm.value()(0, 0)));
        std::vector<DenseWeights> d;
        for (const auto& net : ch.demappers) d.push_back(export_weights(net));
        f.demappers.push_back(std::move(d));
    }
    f.curve = history_;
    return f;
}

namespace {

template <typename T>
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history, int n_channels) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << "iteration";
    for (int c = 0; c < n_channels; ++c) out << ",gmi_ch" << c;
    out << ",total_gmi,loss\n";
    out.precision(10);
    for (const auto& r : history) {
        double total = 0.0;
        out << r.iteration;
        for (double g : r.channel_gmi) {
            out << ',' << g;
            total += g;
        }
        out << ',' << total << ',' << r.loss << '\n';
    }
}

template <typename T>
LearnedFormat run_training_impl(const TrainConfig& cfg, const std::filesystem::path& dir, long long every,
                                bool verbose) {
    std::filesystem::create_directories(dir);
    const auto ckpt = dir / "checkpoint.bin";
    std::optional<Trainer<T>> trainer;
    if (std::filesystem::exists(ckpt)) {
        trainer.emplace(Trainer<T>::load_checkpoint(ckpt));
        // the iteration budget may grow between runs; everything else must match
        auto saved = to_json(trainer->config());
        auto wanted = to_json(cfg);
        saved.erase("max_iters");
        wanted.erase("max_iters");
        require(saved == wanted, "train: " + ckpt.string() + " belongs to a different configuration");
        if (verbose) std::cerr << "resuming at iteration " << trainer->iteration() << "\n";
    } else {
        trainer.emplace(cfg);
    }
    {
        std::ofstream out(dir / "config.json", std::ios::trunc);
        out << to_json(cfg).dump(2) << '\n';
    }
    while (trainer->iteration() < cfg.max_iters) {
        const auto r = trainer->step();
        if (verbose && !r.aborted && (r.iteration % 100 == 0 || r.iteration + 1 == cfg.max_iters)) {
            std::cerr << "iter " << r.iteration << " loss " << r.loss << "\n";
        }
        if (every > 0 && trainer->iteration() % every == 0) {
            trainer->save_checkpoint(ckpt);
            write_loss_csv<T>(dir / "loss.csv", trainer->history(), cfg.n_channels);
        }
    }
    trainer->save_checkpoint(ckpt);
    write_loss_csv<T>(dir / "loss.csv", trainer->history(), cfg.n_channels);
    auto format = trainer->extract_format();
    nlohmann::json summary;
    for (int c = 0; c < cfg.n_channels; ++c) {
        const auto& f = format.formats[static_cast<std::size_t>(c)];
        const auto name = "format_ch" + std::to_string(c) + ".txt";
        save(f, dir / name);
        summary["channels"].push_back({{"file", name},
                                       {"power_dbm", format.power_dbm[static_cast<std::size_t>(c)]},
                                       {"entropy", entropy(f)},
                                       {"degenerate", static_cast<bool>(format.degenerate[static_cast<std::size_t>(c)])}});
        if (format.degenerate[static_cast<std::size_t>(c)]) {
            std::cerr << "warning: channel " << c << " format has two points closer than 1e-6\n";
        }
    }
    summary["iterations"] = trainer->iteration();
    std::ofstream(dir / "learned.json", std::ios::trunc) << summary.dump(2) << '\n';
    return format;
}

}  // namespace

LearnedFormat run_training(const TrainConfig& cfg, const std::filesystem::path& out_dir, long long checkpoint_every,
                           bool verbose) {
    cfg.validate();
    if (cfg.precision == Precision::Single) return run_training_impl<float>(cfg, out_dir, checkpoint_every, verbose);
    return run_training_impl<double>(cfg, out_dir, checkpoint_every, verbose);
}

std::vector<double> demap(const DenseWeights& net, std::span<const Point4> rx) {
    require(!net.layers.empty() && net.layers.front().in == 4 && net.layers.back().out == 1,
            "demap: expected a 4-input, 1-output network");
    std::vector<double> out(rx.size());
    std::vector<double> h, next;
    for (std::size_t k = 0; k < rx.size(); ++k) {
        h.assign(rx[k].begin(), rx[k].end());
        for (const auto& l : net.layers) {
            next.assign(static_cast<std::size_t>(l.out), 0.0);
            for (int o = 0; o < l.out; ++o) {
                double acc = l.bias[static_cast<std::size_t>(o)];
                for (int i = 0; i < l.in; ++i) acc += l.weight[static_cast<std::size_t>(o * l.in + i)] * h[static_cast<std::size_t>(i)];
                switch (l.activation) {
                    case nn::Activation::Relu:
                        acc = std::max(acc, 0.0);
                        break;
                    case nn::Activation::Sigmoid:
                        acc = 1.0 / (1.0 + std::exp(-acc));
                        break;
                    case nn::Activation::Linear:
                        break;
                }
                next[static_cast<std::size_t>(o)] = acc;
            }
            h.swap(next);
        }
        out[k] = h[0];
    }
    return out;
}

template struct ModelSet<float>;
template struct ModelSet<double>;
template ModelSet<float> build_models<float>(const TrainConfig&);
template ModelSet<double> build_models<double>(const TrainConfig&);
template std::vector<Tensor<float>> fiber_channel<float>(const std::vector<Tensor<float>>&,
                                                         const std::vector<Tensor<float>>&, const WdmConfig&,
                                                         const FiberLink&, std::uint64_t);
template std::vector<Tensor<double>> fiber_channel<double>(const std::vector<Tensor<double>>&,
                                                           const std::vector<Tensor<double>>&, const WdmConfig&,
                                                           const FiberLink&, std::uint64_t);
template class Trainer<float>;
template class Trainer<double>;

}  // namespace fibershape
