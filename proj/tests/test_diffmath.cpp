#include <cmath>

#include <gtest/gtest.h>

#include "dgcl/graph.hpp"
#include "dgcl/rng.hpp"
#include "dgcl/tensor.hpp"
#include "expect_error.hpp"
#include "oracles.hpp"

using namespace dgcl;

TEST(Tensor, MatmulIdentityAndHandProduct) {
    Tensor I{{1, 0}, {0, 1}}, B{{3, 4}, {5, 6}};
    EXPECT_EQ(matmul(I, B), B);
    EXPECT_EQ(matmul(Tensor{{1, 2}}, Tensor{{3}, {4}}), (Tensor{{11}}));
}

TEST(Tensor, ShapeErrors) {
    EXPECT_DGCL_ERROR(matmul(Tensor(2, 3), Tensor(2, 3)), ErrorKind::dimension);
    EXPECT_DGCL_ERROR(add(Tensor(2, 3), Tensor(3, 2)), ErrorKind::dimension);
    EXPECT_DGCL_ERROR(add_row(Tensor(2, 3), Tensor(1, 2)), ErrorKind::dimension);
    EXPECT_DGCL_ERROR(slice_cols(Tensor(2, 3), 2, 4), ErrorKind::dimension);
    EXPECT_DGCL_ERROR(log(Tensor{{1.0, 0.0}}), ErrorKind::domain);
    EXPECT_DGCL_ERROR(sqrt(Tensor{{-1.0}}), ErrorKind::domain);
}

TEST(Tensor, SoftmaxCases) {
    auto one = softmax_rows(Tensor{{42.0}});
    EXPECT_DOUBLE_EQ(one[0], 1.0);

    auto flat = softmax_rows(Tensor{{0, 0, 0}});
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(flat[i], 1.0 / 3.0);

    auto big = softmax_rows(Tensor{{1000, 0}});
    ASSERT_TRUE(big.all_finite());
    EXPECT_DOUBLE_EQ(big[0], 1.0);
    EXPECT_NEAR(big[1], std::exp(-1000.0), 1e-300);

    auto ls = log_softmax_rows(Tensor{{1000, 0}});
    EXPECT_DOUBLE_EQ(ls[0], 0.0);
    EXPECT_DOUBLE_EQ(ls[1], -1000.0);
}

TEST(Tensor, Elementwise) {
    EXPECT_EQ(relu(Tensor{{-1, 2}}), (Tensor{{0, 2}}));
    Tensor x{{0.3, -1.2, 4.0}};
    EXPECT_EQ(add(x, Tensor(1, 3)), x);
    auto g = gelu(Tensor{{0.0, 10.0, -10.0}});
    EXPECT_DOUBLE_EQ(g[0], 0.0);
    EXPECT_NEAR(g[1], 10.0, 1e-12);
    EXPECT_NEAR(g[2], 0.0, 1e-12);
}

TEST(Graph, SumOfProductGradientMatchesFiniteDifferences) {
    Rng rng(3);
    auto a = oracle::random_tensor(3, 3, rng), b = oracle::random_tensor(3, 3, rng);
    auto r = oracle::check_gradients([](Graph& g, const auto& p) { return g.sum(g.mul(p[0], p[1])); }, {a, b});
    EXPECT_LE(r.max_rel_error, 1e-6);
}

TEST(Graph, ExpGradientMatchesFiniteDifferences) {
    Rng rng(5);
    auto x = oracle::random_tensor(1, 5, rng);
    auto r = oracle::check_gradients([](Graph& g, const auto& p) { return g.sum(g.exp(p[0])); }, {x});
    EXPECT_LE(r.max_rel_error, 1e-6);
}

TEST(Graph, LinearLossGradientIsOuterProductPattern) {
    Graph g;
    Tensor x{{1.5}, {-2.0}, {0.5}};
    NodeId W = g.leaf(Tensor(2, 3, 0.7), true);
    NodeId loss = g.sum(g.matmul(W, g.leaf(x)));
    auto grads = g.backward(loss);
    const Tensor& dW = grads.at(W);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(dW(i, j), x[j]);
}

TEST(Graph, DisconnectedParameterGetsZeroGradient) {
    Graph g;
    NodeId a = g.leaf(Tensor{{1, 2}}, true);
    NodeId unused = g.leaf(Tensor{{3, 4, 5}}, true);
    auto grads = g.backward(g.sum(g.scale(a, 2.0)));
    EXPECT_EQ(grads.at(unused), Tensor(1, 3));
    EXPECT_EQ(grads.at(a), (Tensor{{2, 2}}));
}

TEST(Graph, NonScalarLossIsContractError) {
    Graph g;
    NodeId a = g.leaf(Tensor(2, 2, 1.0), true);
    EXPECT_DGCL_ERROR(g.backward(a), ErrorKind::contract);
}

TEST(Graph, EveryOpMatchesFiniteDifferences) {
    Rng rng(11);
    auto A = oracle::random_tensor(3, 4, rng), B = oracle::random_tensor(4, 2, rng);
    auto C = oracle::random_tensor(3, 4, rng), row = oracle::random_tensor(1, 4, rng);
    auto pos = oracle::random_tensor(3, 4, rng);
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = 0.5 + std::abs(pos[i]);
    // Weighted sums so symmetric ops are not trivially self-cancelling.
    auto weight = oracle::random_tensor(3, 4, rng);
    auto w = [&](Graph& g, NodeId x) { return g.sum(g.mul(x, g.leaf(weight))); };

    struct Case {
        const char* name;
        oracle::LossBuilder build;
        std::vector<Tensor> inputs;
    };
    std::vector<Case> cases = {
        {"matmul", [&](Graph& g, const auto& p) { return g.sum(g.matmul(p[0], p[1])); }, {A, B}},
        {"transpose", [&](Graph& g, const auto& p) { return w(g, g.transpose(p[0])); }, {transpose(A)}},
        {"add_sub", [&](Graph& g, const auto& p) { return w(g, g.sub(g.add(p[0], p[1]), g.mul(p[1], p[1]))); }, {A, C}},
        {"scale_shift", [&](Graph& g, const auto& p) { return w(g, g.add_scalar(g.scale(p[0], -1.7), 0.3)); }, {A}},
        {"relu", [&](Graph& g, const auto& p) { return w(g, g.relu(p[0])); }, {A}},
        {"gelu", [&](Graph& g, const auto& p) { return w(g, g.gelu(p[0])); }, {A}},
        {"log_sqrt", [&](Graph& g, const auto& p) { return w(g, g.add(g.log(p[0]), g.sqrt(p[0]))); }, {pos}},
        {"softmax", [&](Graph& g, const auto& p) { return w(g, g.softmax_rows(p[0])); }, {A}},
        {"log_softmax", [&](Graph& g, const auto& p) { return w(g, g.log_softmax_rows(p[0])); }, {A}},
        {"add_row", [&](Graph& g, const auto& p) { return w(g, g.add_row(p[0], p[1])); }, {A, row}},
        {"row_sum_div",
         [&](Graph& g, const auto& p) { return w(g, g.div_rows(p[0], g.row_sum(p[1]))); },
         {A, pos}},
        {"slice_concat",
         [&](Graph& g, const auto& p) {
             return w(g, g.concat_cols({g.slice_cols(p[0], 2, 4), g.slice_cols(p[0], 0, 2)}));
         },
         {A}},
        {"normalize_rows", [&](Graph& g, const auto& p) { return w(g, g.normalize_rows(p[0])); }, {A}},
    };
    for (auto& c : cases) {
        auto r = oracle::check_gradients(c.build, c.inputs);
        EXPECT_LE(r.max_rel_error, 1e-6) << c.name;
    }
}

TEST(Graph, ReluDerivativeIsZeroAtZero) {
    Graph g;
    NodeId x = g.leaf(Tensor{{0.0, 1.0, -1.0}}, true);
    auto grads = g.backward(g.sum(g.relu(x)));
    EXPECT_EQ(grads.at(x), (Tensor{{0.0, 1.0, 0.0}}));
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
    auto a = Rng::stream(7, {1, 2}), b = Rng::stream(7, {1, 2}), c = Rng::stream(7, {2, 1});
    auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
}

TEST(Rng, ChooseAndPermutation) {
    Rng rng(1);
    auto p = rng.permutation(20);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(p[i], i);
    auto c = rng.choose(10, 4);
    EXPECT_EQ(c.size(), 4u);
    EXPECT_EQ(std::set<std::size_t>(c.begin(), c.end()).size(), 4u);
    for (auto i : c) EXPECT_LT(i, 10u);
}

TEST(Rng, NormalMoments) {
    Rng rng(2);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.01);
}
