#pragma once

#include "fibershape/nn/tensor.hpp"

#include <span>

namespace fibershape::nn {

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<Matrix<T>> m;
    std::vector<Matrix<T>> v;
    long long step = 0;
};

/// Bias-corrected ADAM update of `params` in place. State is lazily sized on
/// the first call. A parameter with an empty gradient is treated as zero grad.
template <typename T>
void adam_update(std::span<Matrix<T>* const> params, std::span<const Matrix<T>> grads, AdamState<T>& state,
                 const AdamConfig& cfg);

/// Convenience overload taking graph parameters and their accumulated grads.
template <typename T>
void adam_step(std::span<const Tensor<T>> params, AdamState<T>& state, const AdamConfig& cfg);

}  // namespace fibershape::nn
