#include "fibershape/nn/tensor.hpp"

#include "fibershape/error.hpp"
#include "fibershape/random.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>
#include <utility>

namespace fibershape::nn {
namespace {

template <typename T>
using NodeFn = std::function<void(Node<T>&)>;

template <typename T>
Tensor<T> make_result(Matrix<T> value, std::initializer_list<Tensor<T>> parents, NodeFn<T> fn) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
        n->requires_grad = true;
        for (const auto& p : parents) n->parents.push_back(p.node());
        n->backward_fn = std::move(fn);
    }
    return Tensor<T>::from_node(std::move(n));
}

template <typename T>
void push(Node<T>& self, std::size_t i, const Matrix<T>& g) {
    auto& p = *self.parents[i];
    if (p.requires_grad) p.accumulate(g);
}

template <typename T>
void same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    require(a.rows() == b.rows() && a.cols() == b.cols(),
            std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
}

template <typename T>
T softplus(T x) {
    return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T stable_sigmoid(T x) {
    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
Matrix<T> row_softmax(const Matrix<T>& a) {
    Matrix<T> y(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        const T mx = a.row(r).maxCoeff();
        y.row(r) = (a.row(r).array() - mx).exp().matrix();
        y.row(r) /= y.row(r).sum();
    }
    return y;
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Matrix<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

template <typename T>
Matrix<T> Tensor<T>::grad() const {
    if (node_->grad.size() == 0) return Matrix<T>::Zero(node_->value.rows(), node_->value.cols());
    return node_->grad;
}

template <typename T>
T Tensor<T>::item() const {
    require(rows() == 1 && cols() == 1, "item: tensor is not 1x1");
    return node_->value(0, 0);
}

template <typename T>
void backward(const Tensor<T>& loss) {
    require(loss.defined(), "backward: undefined tensor");
    require(loss.rows() == 1 && loss.cols() == 1, "backward: loss must be a scalar (1x1), got " +
                                                      std::to_string(loss.rows()) + "x" + std::to_string(loss.cols()));
    if (!loss.requires_grad()) return;
    // iterative post-order DFS -> topological order
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss.node()->accumulate(Matrix<T>::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
    }
}

template <typename T>
Tensor<T> custom_op(std::vector<Tensor<T>> inputs, Matrix<T> value,
                    std::function<std::vector<Matrix<T>>(const Matrix<T>&)> backward_fn) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    bool any = false;
    for (const auto& p : inputs) any = any || p.requires_grad();
    if (any) {
        n->requires_grad = true;
        for (const auto& p : inputs) n->parents.push_back(p.node());
        n->backward_fn = [fn = std::move(backward_fn)](Node<T>& self) {
            auto grads = fn(self.grad);
            require(grads.size() == self.parents.size(), "custom_op: backward returned wrong gradient count");
            for (std::size_t i = 0; i < grads.size(); ++i) {
                if (grads[i].size() == 0) continue;
                require(grads[i].rows() == self.parents[i]->value.rows() &&
                            grads[i].cols() == self.parents[i]->value.cols(),
                        "custom_op: gradient shape mismatch for input " + std::to_string(i));
                push(self, i, grads[i]);
            }
        };
    }
    return Tensor<T>::from_node(std::move(n));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    same_shape(a, b, "add");
    return make_result<T>(a.value() + b.value(), {a, b}, [](Node<T>& s) {
        push(s, 0, s.grad);
        push(s, 1, s.grad);
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    same_shape(a, b, "sub");
    return make_result<T>(a.value() - b.value(), {a, b}, [](Node<T>& s) {
        push(s, 0, s.grad);
        push<T>(s, 1, -s.grad);
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    same_shape(a, b, "mul");
    return make_result<T>(a.value().cwiseProduct(b.value()), {a, b}, [](Node<T>& s) {
        push<T>(s, 0, s.grad.cwiseProduct(s.parents[1]->value));
        push<T>(s, 1, s.grad.cwiseProduct(s.parents[0]->value));
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T k) {
    return make_result<T>(a.value() * k, {a}, [k](Node<T>& s) { push<T>(s, 0, s.grad * k); });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& b) {
    require(b.rows() == 1 && b.cols() == a.cols(), "add_row: expected a 1x" + std::to_string(a.cols()) + " row");
    Matrix<T> v = a.value();
    v.rowwise() += b.value().row(0);
    return make_result<T>(std::move(v), {a, b}, [](Node<T>& s) {
        push(s, 0, s.grad);
        push<T>(s, 1, s.grad.colwise().sum());
    });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, const Tensor<T>& k) {
    require(k.rows() == 1 && k.cols() == 1, "mul_scalar: scale must be 1x1");
    return make_result<T>(a.value() * k.value()(0, 0), {a, k}, [](Node<T>& s) {
        const T kv = s.parents[1]->value(0, 0);
        push<T>(s, 0, s.grad * kv);
        Matrix<T> gk(1, 1);
        gk(0, 0) = s.grad.cwiseProduct(s.parents[0]->value).sum();
        push(s, 1, gk);
    });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                                      std::to_string(b.rows()) + ")");
    Matrix<T> v(a.rows(), b.cols());
    v.noalias() = a.value() * b.value();
    return make_result<T>(std::move(v), {a, b}, [](Node<T>& s) {
        const auto& av = s.parents[0]->value;
        const auto& bv = s.parents[1]->value;
        if (s.parents[0]->requires_grad) {
            Matrix<T> ga(av.rows(), av.cols());
            ga.noalias() = s.grad * bv.transpose();
            push(s, 0, ga);
        }
        if (s.parents[1]->requires_grad) {
            Matrix<T> gb(bv.rows(), bv.cols());
            gb.noalias() = av.transpose() * s.grad;
            push(s, 1, gb);
        }
    });
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    require(x.cols() == w.cols(), "dense layer: input width " + std::to_string(x.cols()) + " does not match " +
                                      std::to_string(w.cols()));
    require(b.rows() == 1 && b.cols() == w.rows(), "dense layer: bias shape mismatch");
    Matrix<T> v(x.rows(), w.rows());
    v.noalias() = x.value() * w.value().transpose();
    v.rowwise() += b.value().row(0);
    return make_result<T>(std::move(v), {x, w, b}, [](Node<T>& s) {
        const auto& xv = s.parents[0]->value;
        const auto& wv = s.parents[1]->value;
        if (s.parents[0]->requires_grad) {
            Matrix<T> gx(xv.rows(), xv.cols());
            gx.noalias() = s.grad * wv;
            push(s, 0, gx);
        }
        if (s.parents[1]->requires_grad) {
            Matrix<T> gw(wv.rows(), wv.cols());
            gw.noalias() = s.grad.transpose() * xv;
            push(s, 1, gw);
        }
        push<T>(s, 2, s.grad.colwise().sum());
    });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return make_result<T>(a.value().cwiseMax(T(0)), {a}, [](Node<T>& s) {
        const auto& av = s.parents[0]->value;
        push<T>(s, 0, (av.array() > T(0)).select(s.grad.array(), T(0)).matrix());
    });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    Matrix<T> y = a.value().unaryExpr([](T v) { return stable_sigmoid(v); });
    return make_result<T>(std::move(y), {a}, [](Node<T>& s) {
        const auto& yv = s.value;
        push<T>(s, 0, (s.grad.array() * yv.array() * (T(1) - yv.array())).matrix());
    });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    return make_result<T>(a.value().array().exp().matrix(), {a},
                          [](Node<T>& s) { push<T>(s, 0, s.grad.cwiseProduct(s.value)); });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
    return make_result<T>(a.value().array().log().matrix(), {a}, [](Node<T>& s) {
        push<T>(s, 0, (s.grad.array() / s.parents[0]->value.array()).matrix());
    });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
    return make_result<T>(a.value().array().sqrt().matrix(), {a}, [](Node<T>& s) {
        push<T>(s, 0, (s.grad.array() / (T(2) * s.value.array())).matrix());
    });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
    return make_result<T>(a.value().array().square().matrix(), {a}, [](Node<T>& s) {
        push<T>(s, 0, (T(2) * s.grad.array() * s.parents[0]->value.array()).matrix());
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    Matrix<T> v(1, 1);
    v(0, 0) = a.value().sum();
    return make_result<T>(std::move(v), {a}, [](Node<T>& s) {
        const auto& av = s.parents[0]->value;
        push<T>(s, 0, Matrix<T>::Constant(av.rows(), av.cols(), s.grad(0, 0)));
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    require(a.value().size() > 0, "mean: empty tensor");
    return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
    return make_result<T>(row_softmax(a.value()), {a}, [](Node<T>& s) {
        const auto& y = s.value;
        Matrix<T> g(y.rows(), y.cols());
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const T dot = s.grad.row(r).dot(y.row(r));
            g.row(r) = (y.row(r).array() * (s.grad.row(r).array() - dot)).matrix();
        }
        push(s, 0, g);
    });
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& a) {
    Matrix<T> v = a.value();
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const T mx = v.row(r).maxCoeff();
        const T lse = mx + std::log((v.row(r).array() - mx).exp().sum());
        v.row(r).array() -= lse;
    }
    return make_result<T>(std::move(v), {a}, [](Node<T>& s) {
        Matrix<T> g(s.value.rows(), s.value.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            const T gs = s.grad.row(r).sum();
            g.row(r) = s.grad.row(r) - (s.value.row(r).array().exp() * gs).matrix();
        }
        push(s, 0, g);
    });
}

template <typename T>
Tensor<T> diagonal(const Tensor<T>& a) {
    require(a.rows() == a.cols(), "diagonal: matrix must be square");
    Matrix<T> v = a.value().diagonal().transpose();
    return make_result<T>(std::move(v), {a}, [](Node<T>& s) {
        const auto n = s.value.cols();
        Matrix<T> g = Matrix<T>::Zero(n, n);
        g.diagonal() = s.grad.row(0).transpose();
        push(s, 0, g);
    });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, Eigen::Index start, Eigen::Index count) {
    require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: range out of bounds");
    Matrix<T> v = a.value().middleRows(start, count);
    return make_result<T>(std::move(v), {a}, [start, count](Node<T>& s) {
        const auto& av = s.parents[0]->value;
        Matrix<T> g = Matrix<T>::Zero(av.rows(), av.cols());
        g.middleRows(start, count) = s.grad;
        push(s, 0, g);
    });
}

template <typename T>
Tensor<T> column(const Tensor<T>& a, Eigen::Index j) {
    require(j >= 0 && j < a.cols(), "column: index out of range");
    Matrix<T> v = a.value().col(j);
    return make_result<T>(std::move(v), {a}, [j](Node<T>& s) {
        const auto& av = s.parents[0]->value;
        Matrix<T> g = Matrix<T>::Zero(av.rows(), av.cols());
        g.col(j) = s.grad.col(0);
        push(s, 0, g);
    });
}

template <typename T>
Tensor<T> binary_log_likelihood(const Tensor<T>& logits, const Matrix<T>& targets) {
    require(logits.rows() == targets.rows() && logits.cols() == targets.cols(),
            "binary_log_likelihood: targets shape mismatch");
    const auto& z = logits.value();
    T acc = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const T b = targets.data()[i];
        const T zi = z.data()[i];
        acc -= b * softplus(-zi) + (T(1) - b) * softplus(zi);
    }
    Matrix<T> v(1, 1);
    v(0, 0) = acc;
    return make_result<T>(std::move(v), {logits}, [targets](Node<T>& s) {
        const auto& zv = s.parents[0]->value;
        Matrix<T> g(zv.rows(), zv.cols());
        const T go = s.grad(0, 0);
        for (Eigen::Index i = 0; i < zv.size(); ++i) {
            g.data()[i] = go * (targets.data()[i] - stable_sigmoid(zv.data()[i]));
        }
        push(s, 0, g);
    });
}

template <typename T>
GumbelSample<T> gumbel_softmax_st(const Tensor<T>& logits, std::size_t n_samples, double temperature,
                                  std::mt19937_64& rng) {
    require(logits.rows() == 1, "gumbel_softmax_st: logits must be a 1xM row");
    require(temperature > 0.0, "gumbel_softmax_st: temperature must be positive");
    const Eigen::Index m = logits.cols();
    const auto n = static_cast<Eigen::Index>(n_samples);
    GumbelSample<T> out;
    out.indices.resize(n_samples);
    Matrix<T> hard = Matrix<T>::Zero(n, m);
    // soft surrogate, kept for the backward pass
    auto soft = std::make_shared<Matrix<T>>(n, m);
    std::vector<double> z(static_cast<std::size_t>(m));
    const auto& lv = logits.value();
    for (Eigen::Index r = 0; r < n; ++r) {
        double best = -std::numeric_limits<double>::infinity();
        Eigen::Index arg = 0;
        for (Eigen::Index j = 0; j < m; ++j) {
            const double u = uniform01(rng);
            z[static_cast<std::size_t>(j)] = static_cast<double>(lv(0, j)) - std::log(-std::log(u));
            if (z[static_cast<std::size_t>(j)] > best) {
                best = z[static_cast<std::size_t>(j)];
                arg = j;
            }
        }
        hard(r, arg) = T(1);
        out.indices[static_cast<std::size_t>(r)] = static_cast<int>(arg);
        double denom = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) denom += std::exp((z[static_cast<std::size_t>(j)] - best) / temperature);
        for (Eigen::Index j = 0; j < m; ++j) {
            (*soft)(r, j) = static_cast<T>(std::exp((z[static_cast<std::size_t>(j)] - best) / temperature) / denom);
        }
    }
    const T inv_tau = static_cast<T>(1.0 / temperature);
    out.one_hot = make_result<T>(std::move(hard), {logits}, [soft, inv_tau](Node<T>& s) {
        const auto& y = *soft;
        Matrix<T> g = Matrix<T>::Zero(1, y.cols());
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const T dot = s.grad.row(r).dot(y.row(r));
            g.row(0) += (y.row(r).array() * (s.grad.row(r).array() - dot)).matrix();
        }
        push<T>(s, 0, g * inv_tau);
    });
    return out;
}

#define FIBERSHAPE_INSTANTIATE_TENSOR(T)                                                                   \
    template class Tensor<T>;                                                                             \
    template void backward<T>(const Tensor<T>&);                                                          \
    template Tensor<T> custom_op<T>(std::vector<Tensor<T>>, Matrix<T>,                                    \
                                    std::function<std::vector<Matrix<T>>(const Matrix<T>&)>);             \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                        \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                        \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                        \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                                     \
    template Tensor<T> add_row<T>(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> mul_scalar<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                     \
    template Tensor<T> affine<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                         \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                      \
    template Tensor<T> exp<T>(const Tensor<T>&);                                                          \
    template Tensor<T> log<T>(const Tensor<T>&);                                                          \
    template Tensor<T> sqrt<T>(const Tensor<T>&);                                                         \
    template Tensor<T> square<T>(const Tensor<T>&);                                                       \
    template Tensor<T> sum<T>(const Tensor<T>&);                                                          \
    template Tensor<T> mean<T>(const Tensor<T>&);                                                         \
    template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                                 \
    template Tensor<T> log_softmax_rows<T>(const Tensor<T>&);                                             \
    template Tensor<T> diagonal<T>(const Tensor<T>&);                                                     \
    template Tensor<T> column<T>(const Tensor<T>&, Eigen::Index);                                         \
    template Tensor<T> slice_rows<T>(const Tensor<T>&, Eigen::Index, Eigen::Index);                                         \
    template Tensor<T> binary_log_likelihood<T>(const Tensor<T>&, const Matrix<T>&);                      \
    template GumbelSample<T> gumbel_softmax_st<T>(const Tensor<T>&, std::size_t, double, std::mt19937_64&);

FIBERSHAPE_INSTANTIATE_TENSOR(float)
FIBERSHAPE_INSTANTIATE_TENSOR(double)

}  // namespace fibershape::nn
