#include "fibershape/nn/adam.hpp"

#include "fibershape/error.hpp"

#include <cmath>

namespace fibershape::nn {

template <typename T>
void adam_update(std::span<Matrix<T>* const> params, std::span<const Matrix<T>> grads, AdamState<T>& state,
                 const AdamConfig& cfg) {
    require(params.size() == grads.size(), "adam: parameter and gradient counts differ");
    if (state.m.empty()) {
        for (auto* p : params) {
            state.m.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
            state.v.push_back(Matrix<T>::Zero(p->rows(), p->cols()));
        }
    }
    require(state.m.size() == params.size(), "adam: optimizer state does not match parameter count");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const auto b1 = static_cast<T>(cfg.beta1);
    const auto b2 = static_cast<T>(cfg.beta2);
    const auto step_size = static_cast<T>(cfg.lr / bc1);
    const auto inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const auto eps = static_cast<T>(cfg.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        auto& m = state.m[i];
        auto& v = state.v[i];
        require(m.rows() == p.rows() && m.cols() == p.cols(), "adam: shape mismatch for parameter " + std::to_string(i));
        const auto& g = grads[i];
        if (g.size() == 0) {
            m *= b1;
            v *= b2;
        } else {
            require(g.rows() == p.rows() && g.cols() == p.cols(), "adam: gradient shape mismatch for parameter " +
                                                                      std::to_string(i));
            m = b1 * m + (T(1) - b1) * g;
            v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
        }
        p.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + eps);
    }
}

template <typename T>
void adam_step(std::span<const Tensor<T>> params, AdamState<T>& state, const AdamConfig& cfg) {
    std::vector<Matrix<T>*> ptrs;
    std::vector<Matrix<T>> grads;
    ptrs.reserve(params.size());
    grads.reserve(params.size());
    for (auto p : params) {
        ptrs.push_back(&p.mutable_value());
        grads.push_back(p.has_grad() ? p.grad() : Matrix<T>());
    }
    adam_update<T>(ptrs, grads, state, cfg);
}

template void adam_update<float>(std::span<Matrix<float>* const>, std::span<const Matrix<float>>,
                                 AdamState<float>&, const AdamConfig&);
template void adam_update<double>(std::span<Matrix<double>* const>, std::span<const Matrix<double>>,
                                  AdamState<double>&, const AdamConfig&);
template void adam_step<float>(std::span<const Tensor<float>>, AdamState<float>&, const AdamConfig&);
template void adam_step<double>(std::span<const Tensor<double>>, AdamState<double>&, const AdamConfig&);

}  // namespace fibershape::nn
