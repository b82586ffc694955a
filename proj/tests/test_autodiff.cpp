#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "ddstn/autodiff.hpp"
#include "doctest.h"
#include "oracles.hpp"

using ddstn::Graph;
using ddstn::Tensor;
using ddstn::Var;

TEST_CASE("matmul identity and hand dot product") {
    Graph g;
    Var I = g.leaf(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    Var A = g.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    const Tensor prod = g.value(g.matmul(I, A));
    CHECK(prod == g.value(A));

    Var r = g.leaf(Tensor::matrix(1, 2, {1, 2}));
    Var c = g.leaf(Tensor::matrix(2, 1, {3, 4}));
    CHECK(g.value(g.matmul(r, c))[0] == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    std::mt19937_64 rng(11);
    Tensor a = oracle::random_matrix(5, 4, rng);
    Tensor b = oracle::random_matrix(4, 3, rng);
    Graph g;
    const Tensor got = g.value(g.matmul(g.leaf(a), g.leaf(b)));
    const Tensor want = oracle::matmul_loops(a, b);
    for (std::size_t i = 0; i < got.numel(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Graph g;
    Var a = g.leaf(Tensor({2, 3}));
    Var b = g.leaf(Tensor({2, 3}));
    CHECK_THROWS_WITH_AS(g.matmul(a, b), doctest::Contains("[2x3]"), ddstn::DimensionError);
}

TEST_CASE("elementwise basics") {
    Graph g;
    Var x = g.leaf(Tensor({1, 3}, {-1, 0, 2}));
    const Tensor r = g.value(g.relu(x));
    CHECK(r[0] == 0);
    CHECK(r[1] == 0);
    CHECK(r[2] == 2);
    CHECK(g.value(g.mean(g.leaf(Tensor({1, 2}, {2, 4}))))[0] == 3);
    CHECK_THROWS_AS(g.add(x, g.leaf(Tensor({1, 2}))), ddstn::DimensionError);
}

TEST_CASE("sum of squares matches loop oracle") {
    std::mt19937_64 rng(7);
    Tensor x = oracle::random_matrix(6, 5, rng);
    double want = 0;
    for (double v : x.values()) want += v * v;
    Graph g;
    CHECK(g.value(g.sum(g.square(g.leaf(x))))[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("conv2d identity kernel and hand window sums") {
    Graph g;
    Tensor in = Tensor::matrix(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(g.value(g.conv2d_valid(g.leaf(in), g.leaf(Tensor::matrix(1, 1, {1})))) == in);

    const Tensor out =
        g.value(g.conv2d_valid(g.leaf(in), g.leaf(Tensor::matrix(2, 2, {1, 1, 1, 1}))));
    CHECK(out == Tensor::matrix(2, 2, {12, 16, 24, 28}));

    CHECK_THROWS_AS(g.conv2d_valid(g.leaf(Tensor({2, 2})), g.leaf(Tensor({3, 3}))),
                    ddstn::DimensionError);
}

TEST_CASE("conv2d matches nested-loop oracle") {
    std::mt19937_64 rng(3);
    Tensor in = oracle::random_matrix(9, 9, rng);
    Tensor k = oracle::random_matrix(3, 3, rng);
    Graph g;
    const Tensor got = g.value(g.conv2d_valid(g.leaf(in), g.leaf(k)));
    const Tensor want = oracle::conv2d_loops(in, k);
    for (std::size_t i = 0; i < got.numel(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("backward trivial gradients") {
    Graph g;
    Var x = g.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    g.backward(g.sum(x));
    for (double v : g.grad(x).values()) CHECK(v == 1.0);

    Graph g2;
    Var y = g2.leaf(Tensor::scalar(3));
    g2.backward(g2.square(y));
    CHECK(g2.grad(y)[0] == 6.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    Graph g;
    Var x = g.leaf(Tensor({2, 2}));
    CHECK_THROWS_AS(g.backward(x), ddstn::ContractError);
}

TEST_CASE("relu subgradient at zero is zero") {
    Graph g;
    Var x = g.leaf(Tensor({1, 3}, {-1, 0, 1}));
    g.backward(g.sum(g.relu(x)));
    CHECK(g.grad(x)[0] == 0);
    CHECK(g.grad(x)[1] == 0);
    CHECK(g.grad(x)[2] == 1);
}

// A small network built directly from graph ops, exercising every op used by
// the loss stack, with gradients checked against central finite differences.
static double net_loss(Graph& g, const std::vector<Var>& params, const Tensor& batch) {
    Var x = g.leaf(batch);
    Var h = g.relu(g.add_rowvec(g.matmul(x, params[0]), params[1]));
    Var s = g.add_rowvec(g.matmul(h, params[2]), params[3]);
    Var l = g.add(g.mean(g.square(s)), g.sum(g.exp_(g.scale(g.square(params[2]), -1.0))));
    Var loss = g.add(l, g.mean(g.sqrt_(g.add_scalar(g.square(h), 1.0))));
    g.backward(loss);
    return g.value(loss)[0];
}

TEST_CASE("two-layer network gradients match finite differences") {
    std::mt19937_64 rng(17);
    const Tensor batch = oracle::random_matrix(4, 3, rng);
    std::vector<Tensor> init = {oracle::random_matrix(3, 5, rng), oracle::random_matrix(1, 5, rng),
                                oracle::random_matrix(5, 1, rng), oracle::random_matrix(1, 1, rng)};

    std::vector<double> flat;
    for (const auto& t : init) flat.insert(flat.end(), t.values().begin(), t.values().end());

    auto unflatten = [&](const std::vector<double>& x) {
        std::vector<Tensor> ps = init;
        std::size_t off = 0;
        for (auto& t : ps)
            for (double& v : t.values()) v = x[off++];
        return ps;
    };

    auto f = [&](const std::vector<double>& x) {
        Graph g;
        std::vector<Var> vars;
        for (const auto& t : unflatten(x)) vars.push_back(g.leaf(t));
        return net_loss(g, vars, batch);
    };

    Graph g;
    std::vector<Var> vars;
    for (const auto& t : init) vars.push_back(g.leaf(t));
    net_loss(g, vars, batch);
    std::vector<double> ad;
    for (Var v : vars)
        for (double gv : g.grad(v).values()) ad.push_back(gv);

    const std::vector<double> fd = oracle::finite_diff(f, flat);
    CHECK(oracle::max_rel_err(ad, fd) <= 1e-4);
}

TEST_CASE("linearity of backward") {
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 10; ++rep) {
        const Tensor x0 = oracle::random_matrix(3, 3, rng);
        std::uniform_real_distribution<double> coef(-2, 2);
        const double a = coef(rng), b = coef(rng);

        auto grads = [&](double wa, double wb) {
            Graph g;
            Var x = g.leaf(x0);
            Var f = g.sum(g.square(x));
            Var h = g.mean(g.exp_(g.scale(x, 0.3)));
            g.backward(g.add(g.scale(f, wa), g.scale(h, wb)));
            return g.grad(x).values();
        };
        const auto gf = grads(1, 0), gh = grads(0, 1), gc = grads(a, b);
        for (std::size_t i = 0; i < gc.size(); ++i)
            CHECK(gc[i] == doctest::Approx(a * gf[i] + b * gh[i]).epsilon(1e-10));
    }
}

TEST_CASE("repeated forward+backward is bit-identical") {
    std::mt19937_64 rng(29);
    const Tensor x0 = oracle::random_matrix(4, 4, rng);
    auto run = [&] {
        Graph g;
        Var x = g.leaf(x0);
        Var loss = g.mean(g.square(g.matmul(x, g.transpose(x))));
        g.backward(loss);
        return std::make_pair(g.value(loss)[0], g.grad(x).values());
    };
    const auto r1 = run(), r2 = run();
    CHECK(r1.first == r2.first);
    CHECK(r1.second == r2.second);
}

TEST_CASE("maxpool2 forward and gradient routing") {
    Graph g;
    Var x = g.leaf(Tensor::matrix(2, 2, {1, 5, 2, 3}));
    Var p = g.maxpool2(x);
    CHECK(g.value(p)[0] == 5);
    g.backward(g.sum(p));
    CHECK(g.grad(x).values() == std::vector<double>{0, 1, 0, 0});
}
