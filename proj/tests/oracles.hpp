// Independent reference computations shared by the unit and acceptance tests.
#pragma once

#include "fibershape/constellation.hpp"
#include "fibershape/nn/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

/// Gauss-Hermite nodes/weights for ∫ e^{-x²} f(x) dx (Golub-Welsch).
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite(int n) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(i / 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    std::vector<double> x(n), w(n);
    for (int i = 0; i < n; ++i) {
        x[i] = es.eigenvalues()(i);
        const double v = es.eigenvectors()(0, i);
        w[i] = std::sqrt(std::numbers::pi) * v * v;
    }
    return {x, w};
}

/// BICM rate of one Gray-labelled BPSK real dimension ±a in N(0, s2), bits.
inline double bpsk_rate(double a, double s2, int nodes = 120) {
    const auto [x, w] = gauss_hermite(nodes);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double n = std::sqrt(2.0 * s2) * x[i];
        const double llr = 2.0 * a * (a + n) / s2;
        // log2(1 + e^{-llr}) computed stably
        const double v = llr > 0 ? std::log1p(std::exp(-llr)) : -llr + std::log1p(std::exp(llr));
        acc += w[i] * v / std::numbers::ln2;
    }
    return 1.0 - acc / std::sqrt(std::numbers::pi);
}

/// Adds real Gaussian noise of variance s2 to every coordinate.
inline std::vector<fibershape::Point4> add_noise(const std::vector<fibershape::Point4>& x, double s2,
                                                 std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, std::sqrt(s2));
    auto y = x;
    for (auto& p : y) {
        for (auto& v : p) v += g(rng);
    }
    return y;
}

/// Uniform random symbol indices and the corresponding points.
inline std::vector<std::uint32_t> draw_indices(std::size_t k, std::size_t m_points, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::uint32_t> u(0, static_cast<std::uint32_t>(m_points - 1));
    std::vector<std::uint32_t> idx(k);
    for (auto& i : idx) i = u(rng);
    return idx;
}

inline std::vector<fibershape::Point4> gather(const fibershape::Constellation4D& c,
                                              const std::vector<std::uint32_t>& idx) {
    std::vector<fibershape::Point4> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(c.points[i]);
    return out;
}

/// O(N²) DFT with the e^{-j2πkn/N} kernel.
inline std::vector<std::complex<double>> dft(const std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / n);
        }
        out[k] = acc;
    }
    return out;
}

inline double rel_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

using Md = fibershape::nn::Matrix<double>;
using Td = fibershape::nn::Tensor<double>;

/// Central-difference check of a graph function. The loss is Σ W∘f(inputs)
/// with a fixed random weighting W; returns the worst relative error over
/// `probes` random input coordinates.
inline double fd_max_rel_error(std::vector<Md> inputs, const std::function<Td(const std::vector<Td>&)>& f,
                               int probes, std::mt19937_64& rng, double h = 1e-6) {
    Md weights;
    auto loss_of = [&](const std::vector<Md>& values, std::vector<Td>* keep) {
        std::vector<Td> ts;
        for (const auto& v : values) ts.push_back(Td::parameter(v));
        const auto out = f(ts);
        if (weights.size() == 0) {
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            weights.resize(out.rows(), out.cols());
            for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = u(rng);
        }
        auto loss = fibershape::nn::sum(fibershape::nn::mul(out, Td::constant(weights)));
        if (keep) *keep = ts;
        return loss;
    };
    std::vector<Td> params;
    auto loss = loss_of(inputs, &params);
    fibershape::nn::backward(loss);
    double worst = 0.0;
    for (int p = 0; p < probes; ++p) {
        const auto ti = std::uniform_int_distribution<std::size_t>(0, inputs.size() - 1)(rng);
        const auto ei = std::uniform_int_distribution<Eigen::Index>(0, inputs[ti].size() - 1)(rng);
        const double analytic = params[ti].grad().data()[ei];
        auto plus = inputs, minus = inputs;
        plus[ti].data()[ei] += h;
        minus[ti].data()[ei] -= h;
        const double fd = (loss_of(plus, nullptr).item() - loss_of(minus, nullptr).item()) / (2 * h);
        worst = std::max(worst, rel_error(analytic, fd));
    }
    return worst;
}

inline Md random_matrix(Eigen::Index r, Eigen::Index c, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    Md m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

}  // namespace oracle
