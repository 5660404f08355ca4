#include <doctest.h>

#include "oracles.hpp"

#include "fibershape/error.hpp"
#include "fibershape/nn/adam.hpp"
#include "fibershape/nn/dense.hpp"
#include "fibershape/nn/tensor.hpp"

#include <cmath>

using namespace fibershape;
using oracle::Md;
using oracle::Td;

namespace {

Md scalar(double v) {
    Md m(1, 1);
    m(0, 0) = v;
    return m;
}

// plain loops, no Eigen expressions
Md reference_forward(const nn::DenseNet<double>& net, const Md& input) {
    Md x = input;
    for (const auto& layer : net.layers()) {
        const Md& w = layer.weight.value();
        const Md& b = layer.bias.value();
        Md y(x.rows(), w.rows());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (Eigen::Index o = 0; o < w.rows(); ++o) {
                double acc = b(0, o);
                for (Eigen::Index i = 0; i < w.cols(); ++i) acc += x(r, i) * w(o, i);
                if (layer.activation == nn::Activation::Relu) acc = acc > 0 ? acc : 0.0;
                if (layer.activation == nn::Activation::Sigmoid) acc = 1.0 / (1.0 + std::exp(-acc));
                y(r, o) = acc;
            }
        }
        x = y;
    }
    return x;
}

}  // namespace

TEST_CASE("square has derivative 2x") {
    auto x = Td::parameter(scalar(3.0));
    auto y = nn::sum(nn::mul(x, x));
    nn::backward(y);
    CHECK(y.item() == 9.0);
    CHECK(x.grad()(0, 0) == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("activation derivatives at known points") {
    Md v(1, 3);
    v << -2.0, 0.5, 3.0;
    auto x = Td::parameter(v);
    nn::backward(nn::sum(nn::relu(x)));
    CHECK(x.grad()(0, 0) == 0.0);
    CHECK(x.grad()(0, 1) == 1.0);
    CHECK(x.grad()(0, 2) == 1.0);

    auto z = Td::parameter(scalar(0.0));
    auto s = nn::sigmoid(z);
    nn::backward(nn::sum(s));
    CHECK(s.item() == doctest::Approx(0.5));
    CHECK(z.grad()(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("graph ops match finite differences") {
    std::mt19937_64 rng(1);
    const auto a = oracle::random_matrix(3, 4, -1.0, 1.0, rng);
    const auto b = oracle::random_matrix(3, 4, 0.5, 2.0, rng);
    const auto w = oracle::random_matrix(5, 4, -1.0, 1.0, rng);
    const auto r = oracle::random_matrix(1, 5, -1.0, 1.0, rng);
    const auto sq = oracle::random_matrix(4, 4, -1.0, 1.0, rng);
    using F = std::function<Td(const std::vector<Td>&)>;
    const std::vector<std::pair<const char*, std::pair<std::vector<Md>, F>>> cases{
        {"mul-sub", {{a, b}, [](const auto& t) { return nn::mul(nn::sub(t[0], t[1]), t[1]); }}},
        {"log-exp", {{a, b}, [](const auto& t) { return nn::add(nn::log(t[1]), nn::exp(t[0])); }}},
        {"sqrt-square", {{b}, [](const auto& t) { return nn::sqrt(nn::square(nn::scale(t[0], 1.5))); }}},
        {"affine", {{a, w, r}, [](const auto& t) { return nn::affine(t[0], t[1], t[2]); }}},
        {"matmul", {{a, sq}, [](const auto& t) { return nn::matmul(t[0], t[1]); }}},
        {"softmax", {{a}, [](const auto& t) { return nn::softmax_rows(t[0]); }}},
        {"log-softmax", {{a}, [](const auto& t) { return nn::log_softmax_rows(t[0]); }}},
        {"diagonal", {{sq}, [](const auto& t) { return nn::diagonal(t[0]); }}},
        {"slice-column", {{a}, [](const auto& t) { return nn::column(nn::slice_rows(t[0], 1, 2), 3); }}},
        {"mean-scalar", {{a, b}, [](const auto& t) { return nn::mul_scalar(t[0], nn::mean(t[1])); }}},
        {"add-row", {{a, oracle::random_matrix(1, 4, -1.0, 1.0, rng)},
                     [](const auto& t) { return nn::sigmoid(nn::add_row(t[0], t[1])); }}},
    };
    for (const auto& [name, c] : cases) {
        CAPTURE(name);
        CHECK(oracle::fd_max_rel_error(c.first, c.second, 20, rng) < 1e-6);
    }
}

TEST_CASE("binary log likelihood matches the direct formula and gradient") {
    std::mt19937_64 rng(2);
    auto z = oracle::random_matrix(6, 1, -30.0, 30.0, rng);
    Md bits(6, 1);
    bits << 1, 0, 1, 1, 0, 0;
    auto zt = Td::parameter(z);
    auto ll = nn::binary_log_likelihood(zt, bits);
    // log σ(z) = -softplus(-z), log(1 - σ(z)) = -softplus(z)
    auto softplus = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
    double expect = 0.0;
    for (int k = 0; k < 6; ++k) {
        expect -= bits(k, 0) * softplus(-z(k, 0)) + (1 - bits(k, 0)) * softplus(z(k, 0));
    }
    CHECK(ll.item() == doctest::Approx(expect).epsilon(1e-9));
    nn::backward(ll);
    for (int k = 0; k < 6; ++k) {
        const double p = 1.0 / (1.0 + std::exp(-z(k, 0)));
        CHECK(zt.grad()(k, 0) == doctest::Approx(bits(k, 0) - p).epsilon(1e-12));
    }
}

TEST_CASE("backward requires a scalar loss") {
    auto x = Td::parameter(Md::Ones(2, 2));
    CHECK_THROWS_AS(nn::backward(nn::square(x)), InvalidInput);
}

TEST_CASE("shape mismatches are rejected") {
    auto a = Td::parameter(Md::Ones(2, 3));
    auto b = Td::parameter(Md::Ones(3, 2));
    CHECK_THROWS_AS(nn::add(a, b), InvalidInput);
    CHECK_THROWS_AS(nn::matmul(a, a), InvalidInput);
}

TEST_CASE("unreachable parameters get zero gradient") {
    auto used = Td::parameter(scalar(2.0));
    auto unused = Td::parameter(Md::Ones(2, 3));
    nn::backward(nn::sum(nn::square(used)));
    CHECK_FALSE(unused.has_grad());
    CHECK(unused.grad().isZero());
    CHECK(unused.grad().rows() == 2);
}

TEST_CASE("gradients accumulate across backward calls") {
    auto x = Td::parameter(scalar(1.5));
    nn::backward(nn::sum(nn::scale(x, 2.0)));
    nn::backward(nn::sum(nn::scale(x, 3.0)));
    CHECK(x.grad()(0, 0) == doctest::Approx(5.0));
    x.zero_grad();
    CHECK_FALSE(x.has_grad());
}

TEST_CASE("dense net forward matches a loop reimplementation") {
    std::mt19937_64 rng(3);
    const auto net = nn::make_demapper_net<double>(16, rng);
    const auto x = oracle::random_matrix(7, 4, -2.0, 2.0, rng);
    const Md got = net.forward(Td::constant(x)).value();
    const Md ref = reference_forward(net, x);
    CHECK((got - ref).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((nn::evaluate(net, x) - ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identity weights pass inputs through") {
    std::mt19937_64 rng(4);
    const std::vector<int> widths{3};
    const std::vector<nn::Activation> acts{nn::Activation::Linear};
    nn::DenseNet<double> net(3, widths, acts, rng);
    net.layers()[0].weight.mutable_value() = Md::Identity(3, 3);
    net.layers()[0].bias.mutable_value().setZero();
    const auto x = oracle::random_matrix(4, 3, -1.0, 1.0, rng);
    CHECK(net.forward(Td::constant(x)).value() == x);
}

TEST_CASE("dense net parameters match finite differences") {
    std::mt19937_64 rng(5);
    auto net = nn::make_gs_net<double>(8, 12, rng);
    for (auto& l : net.layers()) {
        // nonzero biases keep the relu kinks away from the probes
        l.bias.mutable_value() = oracle::random_matrix(1, l.out_dim(), 0.05, 0.2, rng);
    }
    const auto x = oracle::random_matrix(5, 8, -1.0, 1.0, rng);
    std::vector<Md> values;
    for (const auto& p : net.parameters()) values.push_back(p.value());
    auto f = [&](const std::vector<Td>& ps) {
        auto copy = net;
        std::size_t i = 0;
        for (auto& l : copy.layers()) {
            l.weight = ps[i++];
            l.bias = ps[i++];
        }
        return copy.forward(Td::constant(x));
    };
    CHECK(oracle::fd_max_rel_error(values, f, 100, rng) < 1e-5);
}

TEST_CASE("input width mismatch is rejected") {
    std::mt19937_64 rng(6);
    const auto net = nn::make_demapper_net<double>(8, rng);
    CHECK_THROWS_AS(net.forward(Td::constant(Md::Ones(2, 5))), InvalidInput);
}

TEST_CASE("network shapes and parameter counts") {
    std::mt19937_64 rng(7);
    const int m = 64, h = 32;
    const auto gs = nn::make_gs_net<double>(m, h, rng);
    CHECK(gs.parameter_count() == static_cast<std::size_t>(m * h + h + 2 * (h * h + h) + 4 * h + 4));
    CHECK(gs.output_dim() == 4);
    const auto ps = nn::make_ps_net<double>(m, h, rng);
    CHECK(ps.parameter_count() == static_cast<std::size_t>(m * h + h + h * h + h + h * m + m));
    CHECK(ps.output_dim() == m);
    const auto dm = nn::make_demapper_net<double>(h, rng);
    CHECK(dm.parameter_count() == static_cast<std::size_t>(4 * h + h + 2 * (h * h + h) + h + 1));
    CHECK(dm.layers().back().activation == nn::Activation::Sigmoid);
    const double bound = std::sqrt(6.0 / m);
    CHECK(gs.layers()[0].weight.value().cwiseAbs().maxCoeff() <= bound);
    CHECK(gs.layers()[0].bias.value().isZero());
}

TEST_CASE("gumbel draws are one-hot and follow the softmax") {
    Md l(1, 4);
    l << 0.3, -0.7, 1.1, 0.0;
    std::mt19937_64 rng(8);
    const std::size_t n = 40000;
    const auto s = nn::gumbel_softmax_st(Td::constant(l), n, 0.5, rng);
    const Md& v = s.one_hot.value();
    CHECK(v.rows() == static_cast<Eigen::Index>(n));
    CHECK((v.rowwise().sum().array() == 1.0).all());
    CHECK(((v.array() == 0.0) || (v.array() == 1.0)).all());
    double z = 0.0;
    for (int j = 0; j < 4; ++j) z += std::exp(l(0, j));
    for (int j = 0; j < 4; ++j) {
        CHECK(v.col(j).sum() / n == doctest::Approx(std::exp(l(0, j)) / z).epsilon(0.03));
    }
    for (std::size_t r = 0; r < 10; ++r) CHECK(v(static_cast<Eigen::Index>(r), s.indices[r]) == 1.0);
}

TEST_CASE("a dominant logit is always selected") {
    Md l = Md::Zero(1, 6);
    l(0, 4) = 50.0;
    std::mt19937_64 rng(9);
    const auto s = nn::gumbel_softmax_st(Td::constant(l), 10000, 1.0, rng);
    CHECK(s.one_hot.value().col(4).sum() == 10000.0);
}

TEST_CASE("straight-through gradient is a softmax jacobian") {
    std::mt19937_64 rng(10);
    auto l = Td::parameter(oracle::random_matrix(1, 5, -1.0, 1.0, rng));
    // rows of a softmax sum to one, so the total has zero gradient
    auto all = nn::gumbel_softmax_st(l, 64, 0.7, rng);
    nn::backward(nn::sum(all.one_hot));
    CHECK(l.grad().cwiseAbs().maxCoeff() < 1e-12);

    l.zero_grad();
    auto one = nn::gumbel_softmax_st(l, 1, 0.7, rng);
    const int k = one.indices[0];
    Md pick = Md::Zero(1, 5);
    pick(0, k) = 1.0;
    nn::backward(nn::sum(nn::mul(one.one_hot, Td::constant(pick))));
    const Md g = l.grad();
    CHECK(std::abs(g.sum()) < 1e-12);
    CHECK(g(0, k) > 0.0);
    for (int j = 0; j < 5; ++j) {
        if (j != k) CHECK(g(0, j) <= 0.0);
    }
}

TEST_CASE("adam first step moves by lr against the gradient sign") {
    nn::AdamConfig cfg;
    cfg.lr = 0.01;
    Md p(1, 3);
    p << 1.0, -2.0, 0.5;
    Md g(1, 3);
    g << 3.0, -0.2, 0.0;
    nn::AdamState<double> st;
    std::vector<Md*> ps{&p};
    std::vector<Md> gs{g};
    const Md before = p;
    nn::adam_update<double>(ps, gs, st, cfg);
    CHECK(p(0, 0) - before(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p(0, 1) - before(0, 1) == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(p(0, 2) == before(0, 2));
    CHECK(st.step == 1);
}

TEST_CASE("adam is invariant to gradient scale") {
    nn::AdamConfig cfg;
    cfg.eps = 1e-12;
    Md a = Md::Constant(1, 2, 1.0), b = a;
    nn::AdamState<double> sa, sb;
    std::mt19937_64 rng(11);
    for (int i = 0; i < 50; ++i) {
        const Md g = oracle::random_matrix(1, 2, -1.0, 1.0, rng);
        std::vector<Md*> pa{&a}, pb{&b};
        std::vector<Md> ga{g}, gb{Md(g * 1000.0)};
        nn::adam_update<double>(pa, ga, sa, cfg);
        nn::adam_update<double>(pb, gb, sb, cfg);
    }
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("adam minimizes a quadratic") {
    nn::AdamConfig cfg;
    cfg.lr = 0.05;
    auto x = Td::parameter(scalar(0.0));
    nn::AdamState<double> st;
    std::vector<Td> params{x};
    for (int i = 0; i < 3000; ++i) {
        x.zero_grad();
        nn::backward(nn::sum(nn::square(nn::sub(x, Td::constant(scalar(5.0))))));
        nn::adam_step<double>(params, st, cfg);
    }
    CHECK(x.value()(0, 0) == doctest::Approx(5.0).epsilon(1e-3));
}
