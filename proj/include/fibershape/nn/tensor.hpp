#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace fibershape::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Node {
    Matrix<T> value;
    Matrix<T> grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into the parents.
    std::function<void(Node&)> backward_fn;

    void accumulate(const Matrix<T>& g) {
        if (grad.size() == 0) {
            grad = g;
        } else {
            grad += g;
        }
    }
};

/// Handle to a node of the reverse-mode graph. Copies share the node.
/// Values are 2D, rows index batch items.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Matrix<T> value, bool requires_grad = false);

    /// Leaf that receives gradients.
    static Tensor parameter(Matrix<T> value) { return Tensor(std::move(value), true); }
    static Tensor constant(Matrix<T> value) { return Tensor(std::move(value), false); }

    const Matrix<T>& value() const { return node_->value; }
    Matrix<T>& mutable_value() { return node_->value; }
    /// Gradient, or zeros of the value's shape when nothing reached this node.
    Matrix<T> grad() const;
    bool has_grad() const { return node_->grad.size() != 0; }
    void zero_grad() { node_->grad.resize(0, 0); }

    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    T item() const;
    bool defined() const { return static_cast<bool>(node_); }

    const std::shared_ptr<Node<T>>& node() const { return node_; }
    static Tensor from_node(std::shared_ptr<Node<T>> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Reverse pass from a 1x1 loss. Every node reachable from the loss is visited
/// once, in reverse topological order; gradients accumulate into leaves.
template <typename T>
void backward(const Tensor<T>& loss);

/// Builds an op node from precomputed value and a backward closure. The
/// closure receives the output gradient and must return one gradient per input
/// (an empty matrix means "no contribution").
template <typename T>
Tensor<T> custom_op(std::vector<Tensor<T>> inputs, Matrix<T> value,
                    std::function<std::vector<Matrix<T>>(const Matrix<T>& out_grad)> backward_fn);

// Elementwise and structural ops.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
/// a (n×c) + b (1×c) broadcast over rows.
template <typename T> Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& b);
/// a (any shape) times a 1×1 tensor s.
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, const Tensor<T>& s);
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x Wᵀ + b: the dense-layer affine map (x: n×in, W: out×in, b: 1×out).
template <typename T> Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> exp(const Tensor<T>& a);
template <typename T> Tensor<T> log(const Tensor<T>& a);
template <typename T> Tensor<T> sqrt(const Tensor<T>& a);
template <typename T> Tensor<T> square(const Tensor<T>& a);
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& a);
template <typename T> Tensor<T> log_softmax_rows(const Tensor<T>& a);
/// Diagonal of a square matrix as a 1×n row.
template <typename T> Tensor<T> diagonal(const Tensor<T>& a);
/// Rows [start, start + count) as a count×c tensor.
template <typename T> Tensor<T> slice_rows(const Tensor<T>& a, Eigen::Index start, Eigen::Index count);
/// Column j as an n×1 tensor.
template <typename T> Tensor<T> column(const Tensor<T>& a, Eigen::Index j);
/// Σ_k [b_k log σ(z_k) + (1 - b_k) log(1 - σ(z_k))] in nats, computed from the
/// pre-sigmoid logits z with log-sum-exp stabilization. targets are constants.
template <typename T> Tensor<T> binary_log_likelihood(const Tensor<T>& logits, const Matrix<T>& targets);

/// Straight-through Gumbel-Softmax draws from a 1×M logit row.
template <typename T>
struct GumbelSample {
    Tensor<T> one_hot;             // n_samples × M, exact one-hot rows
    std::vector<int> indices;      // selected class per row
};

/// Forward: one-hot at argmax(logits + Gumbel noise) per row. Backward: the
/// gradient of softmax((logits + noise)/temperature), summed over rows.
template <typename T>
GumbelSample<T> gumbel_softmax_st(const Tensor<T>& logits, std::size_t n_samples, double temperature,
                                  std::mt19937_64& rng);

}  // namespace fibershape::nn
