#pragma once

#include "fibershape/channel.hpp"
#include "fibershape/constellation.hpp"
#include "fibershape/nn/adam.hpp"
#include "fibershape/nn/dense.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fibershape {

enum class Precision { Single, Double };
enum class ChannelModel { Fiber, Awgn };

/// Everything that defines a training run. Defaults are the desk-scale
/// profile; full() returns the full-scale settings.
struct TrainConfig {
    int m = 6;
    int n_channels = 1;
    int n_spans_train = 10;
    int batch_items = 2;
    int symbols_per_channel = 2048;
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    long long max_iters = 2000;
    Precision precision = Precision::Double;
    double temperature = 1.0;
    std::uint64_t seed = 1;
    int hidden = 256;
    bool train_ps = true;
    bool train_power = true;
    double initial_power_dbm = 0.0;

    ChannelModel channel = ChannelModel::Fiber;
    double awgn_snr_db = 12.0;  // per 2D, AWGN stand-in only

    // WDM / DSP
    double symbol_rate = 50e9;
    double spacing = 51.5e9;
    int sps = 4;
    double rolloff = 0.01;

    // fiber overrides (SI)
    FiberLink link = [] {
        FiberLink l = FiberLink::standard(10);
        l.steps_per_span = 25;
        return l;
    }();

    static TrainConfig desk();
    static TrainConfig full();
    /// m=4, single channel, AWGN stand-in.
    static TrainConfig toy_awgn(double snr_db = 12.0);

    int n_symbols() const { return 1 << m; }
    WdmConfig wdm() const;
    FiberLink train_link() const;
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Trainable parts of one WDM channel.
template <typename T>
struct ChannelModels {
    nn::DenseNet<T> ps;
    nn::DenseNet<T> gs;
    std::vector<nn::DenseNet<T>> demappers;  // one per bit
    nn::Tensor<T> power_dbm;                 // 1×1
};

template <typename T>
struct ModelSet {
    std::vector<ChannelModels<T>> channels;

    /// Parameters in a fixed order: per channel PS, GS, demappers, power.
    std::vector<nn::Tensor<T>> parameters() const;
    std::size_t parameter_count() const;
};

/// Builds n_channels × (PS net, GS net, m demappers, power scalar) from the
/// config seed.
template <typename T>
ModelSet<T> build_models(const TrainConfig& cfg);

/// Dense-layer weights in double precision, detached from any graph.
struct DenseWeights {
    struct Layer {
        std::vector<double> weight;  // out × in, row major
        std::vector<double> bias;
        int in = 0;
        int out = 0;
        nn::Activation activation = nn::Activation::Linear;
    };
    std::vector<Layer> layers;
};

struct LossRecord {
    long long iteration = 0;
    double loss = 0.0;
    std::vector<double> channel_gmi;
};

struct LearnedFormat {
    std::vector<Constellation4D> formats;  // one per channel, normalized
    std::vector<double> power_dbm;
    std::vector<bool> degenerate;          // two points closer than 1e-6
    std::vector<std::vector<DenseWeights>> demappers;
    std::vector<LossRecord> curve;
};

struct StepResult {
    long long iteration = 0;
    double loss = 0.0;
    std::vector<double> channel_gmi;
    bool aborted = false;
};

/// The end-to-end optimization loop. Every source of randomness in an
/// iteration is a substream of (seed, iteration, ...), so the training state
/// is fully described by models, optimizer moments and the iteration counter.
template <typename T>
class Trainer {
public:
    explicit Trainer(TrainConfig cfg);

    /// One ADAM step on the summed-GMI loss. A non-finite loss aborts the step;
    /// three consecutive aborts throw NumericalError.
    StepResult step();

    /// Loss graph for iteration `iteration` without updating anything.
    struct Forward {
        nn::Tensor<T> loss;
        std::vector<double> channel_gmi;
    };
    Forward forward(long long iteration) const;

    LearnedFormat extract_format() const;

    void save_checkpoint(const std::filesystem::path& path) const;
    static Trainer load_checkpoint(const std::filesystem::path& path);

    const TrainConfig& config() const { return cfg_; }
    const ModelSet<T>& models() const { return models_; }
    ModelSet<T>& models() { return models_; }
    const nn::AdamState<T>& optimizer_state() const { return adam_; }
    long long iteration() const { return iteration_; }
    const std::vector<LossRecord>& history() const { return history_; }

    /// Constellation of channel c under the current parameters (not normalized
    /// to a file format, but energy normalized).
    Constellation4D current_constellation(int channel) const;

private:
    std::vector<nn::Tensor<T>> trainable() const;

    TrainConfig cfg_;
    ModelSet<T> models_;
    nn::AdamState<T> adam_;
    long long iteration_ = 0;
    int consecutive_aborts_ = 0;
    std::vector<LossRecord> history_;
};

/// Writes the run directory: config.json, loss.csv, checkpoint.bin and one
/// constellation file per channel. Resumes from checkpoint.bin when present.
/// Returns the learned format.
LearnedFormat run_training(const TrainConfig& cfg, const std::filesystem::path& out_dir,
                           long long checkpoint_every = 500, bool verbose = false);

/// Differentiable WDM fiber link as a graph op: per channel K×4 symbols and a
/// 1×1 launch power (dBm) in, per channel K×4 received symbols out. Forward:
/// modulate, set_launch_power, mux, SSFM + ASE, CDC, demux, matched filter and
/// division by the transmit scale. Backward chains the exact adjoints.
template <typename T>
std::vector<nn::Tensor<T>> fiber_channel(const std::vector<nn::Tensor<T>>& symbols,
                                         const std::vector<nn::Tensor<T>>& power_dbm, const WdmConfig& wdm,
                                         const FiberLink& link, std::uint64_t noise_seed);

/// Plain-matrix inference of a demapper: bit-1 probability per received symbol.
std::vector<double> demap(const DenseWeights& net, std::span<const Point4> rx);

}  // namespace fibershape
