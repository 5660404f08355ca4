#include "fibershape/nn/dense.hpp"

#include "fibershape/error.hpp"
#include "fibershape/random.hpp"

#include <array>
#include <cmath>

namespace fibershape::nn {
namespace {

template <typename T>
Matrix<T> uniform_init(Eigen::Index rows, Eigen::Index cols, double limit, std::mt19937_64& rng) {
    Matrix<T> w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        w.data()[i] = static_cast<T>((2.0 * uniform01(rng) - 1.0) * limit);
    }
    return w;
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation a) {
    switch (a) {
        case Activation::Relu:
            return relu(x);
        case Activation::Sigmoid:
            return sigmoid(x);
        case Activation::Linear:
            break;
    }
    return x;
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Relu:
            return "relu";
        case Activation::Sigmoid:
            return "sigmoid";
        case Activation::Linear:
            return "linear";
    }
    return "?";
}

template <typename T>
DenseNet<T>::DenseNet(int input_dim, std::span<const int> widths, std::span<const Activation> activations,
                      std::mt19937_64& rng) {
    require(widths.size() == activations.size() && !widths.empty(), "DenseNet: one activation per layer");
    require(input_dim > 0, "DenseNet: input width must be positive");
    int fan_in = input_dim;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const int fan_out = widths[i];
        require(fan_out > 0, "DenseNet: layer width must be positive");
        const double limit = activations[i] == Activation::Relu ? std::sqrt(6.0 / fan_in)
                                                                : std::sqrt(6.0 / (fan_in + fan_out));
        DenseLayer<T> layer;
        layer.weight = Tensor<T>::parameter(uniform_init<T>(fan_out, fan_in, limit, rng));
        layer.bias = Tensor<T>::parameter(Matrix<T>::Zero(1, fan_out));
        layer.activation = activations[i];
        layers_.push_back(std::move(layer));
        fan_in = fan_out;
    }
}

template <typename T>
Tensor<T> DenseNet<T>::forward_pre_activation(const Tensor<T>& input) const {
    require(!layers_.empty(), "DenseNet: empty network");
    require(input.cols() == input_dim(), "DenseNet: input width " + std::to_string(input.cols()) +
                                             " does not match first layer (" + std::to_string(input_dim()) + ")");
    Tensor<T> h = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = affine(h, layers_[i].weight, layers_[i].bias);
        if (i + 1 < layers_.size()) h = activate(h, layers_[i].activation);
    }
    return h;
}

template <typename T>
Tensor<T> DenseNet<T>::forward(const Tensor<T>& input) const {
    return activate(forward_pre_activation(input), layers_.back().activation);
}

template <typename T>
std::vector<Tensor<T>> DenseNet<T>::parameters() const {
    std::vector<Tensor<T>> p;
    for (const auto& l : layers_) {
        p.push_back(l.weight);
        p.push_back(l.bias);
    }
    return p;
}

template <typename T>
std::size_t DenseNet<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.value().size() + l.bias.value().size());
    return n;
}

template <typename T>
int DenseNet<T>::input_dim() const {
    return layers_.empty() ? 0 : static_cast<int>(layers_.front().in_dim());
}

template <typename T>
int DenseNet<T>::output_dim() const {
    return layers_.empty() ? 0 : static_cast<int>(layers_.back().out_dim());
}

template <typename T>
DenseNet<T> make_gs_net(int n_symbols, int hidden, std::mt19937_64& rng) {
    const std::array widths{hidden, hidden, hidden, 4};
    const std::array acts{Activation::Relu, Activation::Relu, Activation::Relu, Activation::Linear};
    return DenseNet<T>(n_symbols, widths, acts, rng);
}

template <typename T>
DenseNet<T> make_ps_net(int n_symbols, int hidden, std::mt19937_64& rng) {
    const std::array widths{hidden, hidden, n_symbols};
    const std::array acts{Activation::Relu, Activation::Relu, Activation::Linear};
    return DenseNet<T>(n_symbols, widths, acts, rng);
}

template <typename T>
DenseNet<T> make_demapper_net(int hidden, std::mt19937_64& rng) {
    const std::array widths{hidden, hidden, hidden, 1};
    const std::array acts{Activation::Relu, Activation::Relu, Activation::Relu, Activation::Sigmoid};
    return DenseNet<T>(4, widths, acts, rng);
}

template <typename T>
Matrix<T> evaluate(const DenseNet<T>& net, const Matrix<T>& input) {
    return net.forward(Tensor<T>::constant(input)).value();
}

#define FIBERSHAPE_INSTANTIATE_DENSE(T)                                        \
    template class DenseNet<T>;                                               \
    template DenseNet<T> make_gs_net<T>(int, int, std::mt19937_64&);          \
    template DenseNet<T> make_ps_net<T>(int, int, std::mt19937_64&);          \
    template DenseNet<T> make_demapper_net<T>(int, std::mt19937_64&);         \
    template Matrix<T> evaluate<T>(const DenseNet<T>&, const Matrix<T>&);

FIBERSHAPE_INSTANTIATE_DENSE(float)
FIBERSHAPE_INSTANTIATE_DENSE(double)

}  // namespace fibershape::nn
