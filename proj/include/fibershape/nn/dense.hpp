#pragma once

#include "fibershape/nn/tensor.hpp"

#include <span>
#include <string>

namespace fibershape::nn {

enum class Activation { Relu, Linear, Sigmoid };

std::string to_string(Activation a);

template <typename T>
struct DenseLayer {
    Tensor<T> weight;  // out × in
    Tensor<T> bias;    // 1 × out
    Activation activation = Activation::Linear;

    Eigen::Index in_dim() const { return weight.cols(); }
    Eigen::Index out_dim() const { return weight.rows(); }
};

/// Fully connected network. Weights use He-uniform init for ReLU layers and
/// Xavier-uniform for linear/sigmoid layers; biases start at zero.
template <typename T>
class DenseNet {
public:
    DenseNet() = default;
    DenseNet(int input_dim, std::span<const int> widths, std::span<const Activation> activations,
             std::mt19937_64& rng);

    /// Throws InvalidInput when the input width does not match.
    Tensor<T> forward(const Tensor<T>& input) const;
    /// Same as forward but stops before the final activation.
    Tensor<T> forward_pre_activation(const Tensor<T>& input) const;

    std::vector<Tensor<T>> parameters() const;
    std::size_t parameter_count() const;
    int input_dim() const;
    int output_dim() const;

    const std::vector<DenseLayer<T>>& layers() const { return layers_; }
    std::vector<DenseLayer<T>>& layers() { return layers_; }

private:
    std::vector<DenseLayer<T>> layers_;
};

/// Geometric shaping: M -> 3×ReLU(hidden) -> linear(4).
template <typename T> DenseNet<T> make_gs_net(int n_symbols, int hidden, std::mt19937_64& rng);
/// Probabilistic shaping: M -> 2×ReLU(hidden) -> linear(M) logits.
template <typename T> DenseNet<T> make_ps_net(int n_symbols, int hidden, std::mt19937_64& rng);
/// One bit demapper: 4 -> 3×ReLU(hidden) -> sigmoid(1).
template <typename T> DenseNet<T> make_demapper_net(int hidden, std::mt19937_64& rng);

/// Plain (non-graph) evaluation, used as a reference and for inference.
template <typename T>
Matrix<T> evaluate(const DenseNet<T>& net, const Matrix<T>& input);

}  // namespace fibershape::nn
