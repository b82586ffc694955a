#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "ddstn/losses.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace ddstn;

namespace {

std::vector<double> random_labels(std::size_t n, std::mt19937_64& rng) {
    std::vector<double> y(n);
    for (double& v : y) v = (rng() & 1) ? 1.0 : -1.0;
    return y;
}

double eval_scalar(Var v) { return v.g->value(v)[0]; }

// finite-difference check of a loss built from leaf tensors
void check_gradients(const std::vector<Tensor>& init,
                     const std::function<Var(Graph&, const std::vector<Var>&)>& build,
                     double tol = 1e-4) {
    std::vector<double> flat;
    for (const auto& t : init) flat.insert(flat.end(), t.values().begin(), t.values().end());
    auto f = [&](const std::vector<double>& x) {
        Graph g;
        std::vector<Var> vars;
        std::size_t off = 0;
        for (const auto& t : init) {
            Tensor tt = t;
            for (double& v : tt.values()) v = x[off++];
            vars.push_back(g.leaf(tt));
        }
        return eval_scalar(build(g, vars));
    };
    Graph g;
    std::vector<Var> vars;
    for (const auto& t : init) vars.push_back(g.leaf(t));
    Var loss = build(g, vars);
    g.backward(loss);
    std::vector<double> ad;
    for (Var v : vars)
        for (double gv : g.grad(v).values()) ad.push_back(gv);
    CHECK(oracle::max_rel_err(ad, oracle::finite_diff(f, flat)) <= tol);
}

}  // namespace

TEST_CASE("hinge loss examples") {
    Graph g;
    CHECK(eval_scalar(hinge_loss(g, g.leaf(Tensor({1, 1}, {2})), {1})) == 0.0);
    CHECK(eval_scalar(hinge_loss(g, g.leaf(Tensor({1, 1}, {0})), {1})) == 1.0);
    CHECK(eval_scalar(hinge_loss(g, g.leaf(Tensor({2, 1}, {0.5, 0.5})), {1, -1})) == 1.0);
    CHECK_THROWS_AS(hinge_loss(g, g.leaf(Tensor({1, 1}, {0})), {}), ContractError);
    CHECK_THROWS_AS(hinge_loss(g, g.leaf(Tensor({1, 1}, {0})), {0.0}), DataError);
}

TEST_CASE("hinge permutation invariance and monotonicity") {
    std::mt19937_64 rng(5);
    Tensor s = oracle::random_matrix(6, 1, rng, 2.0);
    std::vector<double> y = random_labels(6, rng);
    Graph g;
    const double base = eval_scalar(hinge_loss(g, g.leaf(s), y));
    // reversed order
    Tensor sr({6, 1});
    std::vector<double> yr(6);
    for (std::size_t i = 0; i < 6; ++i) {
        sr[i] = s[5 - i];
        yr[i] = y[5 - i];
    }
    CHECK(eval_scalar(hinge_loss(g, g.leaf(sr), yr)) == base);

    // increasing y*s never increases the loss
    Tensor s2 = s;
    s2[2] += y[2] * 0.5;
    CHECK(eval_scalar(hinge_loss(g, g.leaf(s2), y)) <= base);
}

TEST_CASE("svmplus surrogate examples") {
    Graph g;
    auto sv = [&](double xi, double s, double y) {
        return eval_scalar(svmplus_paired_loss(g, g.leaf(Tensor({1, 1}, {s})),
                                               g.leaf(Tensor({1, 1}, {xi})), {y}, 1.0));
    };
    CHECK(sv(0, 2, 1) == 0.0);
    CHECK(sv(1, 0, 1) == 1.0);
    CHECK(sv(-1, 0, 1) == 1.0);
    CHECK_THROWS_AS(svmplus_paired_loss(g, g.leaf(Tensor({2, 1})), g.leaf(Tensor({1, 1})), {1, 1}),
                    ContractError);
}

TEST_CASE("svmplus with zero slack equals hinge exactly") {
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n = 1 + rng() % 8;
        Tensor s = oracle::random_matrix(n, 1, rng, 3.0);
        std::vector<double> y = random_labels(n, rng);
        Graph g;
        Var zero = g.leaf(Tensor({n, 1}));
        CHECK(eval_scalar(svmplus_paired_loss(g, g.leaf(s), zero, y, 1.0)) ==
              eval_scalar(hinge_loss(g, g.leaf(s), y)));
    }
}

TEST_CASE("mmd2_linear examples and oracle equivalence") {
    Graph g;
    std::mt19937_64 rng(13);
    Tensor x = oracle::random_matrix(5, 3, rng);
    CHECK(eval_scalar(mmd2_linear(g, g.leaf(x), g.leaf(x))) == 0.0);

    Tensor fs = Tensor::matrix(2, 2, {0, -1, 2, 1});  // mean (1, 0)
    Tensor ft = Tensor::matrix(2, 2, {1, 1, 3, 1});   // mean (2, 1)
    CHECK(eval_scalar(mmd2_linear(g, g.leaf(fs), g.leaf(ft))) == doctest::Approx(2).epsilon(1e-14));

    for (int rep = 0; rep < 5; ++rep) {
        Tensor a = oracle::random_matrix(4 + rep, 3, rng);
        Tensor b = oracle::random_matrix(6, 3, rng);
        const double got = eval_scalar(mmd2_linear(g, g.leaf(a), g.leaf(b)));
        CHECK(got == doctest::Approx(oracle::mmd2_linear_sums(a, b)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(mmd2_linear(g, g.leaf(Tensor({2, 2})), g.leaf(Tensor({2, 3}))), ContractError);
}

TEST_CASE("mmd2_rbf examples and kernel-sum oracle") {
    Graph g;
    std::mt19937_64 rng(17);
    Tensor x = oracle::random_matrix(4, 2, rng);
    CHECK(eval_scalar(mmd2_rbf(g, g.leaf(x), g.leaf(x), {0.5})) == 0.0);

    // fs={0}, ft={2}, gamma=0.25: 1 + 1 - 2 e^{-1}
    Tensor fs({1, 1}, {0.0});
    Tensor ft({1, 1}, {2.0});
    CHECK(eval_scalar(mmd2_rbf(g, g.leaf(fs), g.leaf(ft), {0.25})) ==
          doctest::Approx(2.0 - 2.0 * std::exp(-1.0)).epsilon(1e-10));

    for (int rep = 0; rep < 5; ++rep) {
        Tensor a = oracle::random_matrix(5, 3, rng);
        Tensor b = oracle::random_matrix(4 + rep, 3, rng);
        const std::vector<double> gam = {0.2, 1.0, 3.0};
        const double got = eval_scalar(mmd2_rbf(g, g.leaf(a), g.leaf(b), gam));
        CHECK(got == doctest::Approx(oracle::mmd2_rbf_sums(a, b, gam)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(mmd2_rbf(g, g.leaf(x), g.leaf(x), {}), ConfigError);
    CHECK_THROWS_AS(mmd2_rbf(g, g.leaf(x), g.leaf(x), {-1.0}), ConfigError);
}

TEST_CASE("mmd estimators are symmetric and non-negative") {
    std::mt19937_64 rng(19);
    Graph g;
    for (int rep = 0; rep < 10; ++rep) {
        Tensor a = oracle::random_matrix(3 + rng() % 5, 4, rng);
        Tensor b = oracle::random_matrix(3 + rng() % 5, 4, rng);
        const double lin_ab = eval_scalar(mmd2_linear(g, g.leaf(a), g.leaf(b)));
        const double lin_ba = eval_scalar(mmd2_linear(g, g.leaf(b), g.leaf(a)));
        CHECK(lin_ab == doctest::Approx(lin_ba).epsilon(1e-12));
        CHECK(lin_ab >= -1e-12);
        const double rbf_ab = eval_scalar(mmd2_rbf(g, g.leaf(a), g.leaf(b), {0.7}));
        const double rbf_ba = eval_scalar(mmd2_rbf(g, g.leaf(b), g.leaf(a), {0.7}));
        CHECK(rbf_ab == doctest::Approx(rbf_ba).epsilon(1e-12));
        CHECK(rbf_ab >= -1e-12);
    }
}

TEST_CASE("coral examples and covariance oracle") {
    Graph g;
    std::mt19937_64 rng(23);
    Tensor x = oracle::random_matrix(5, 3, rng);
    CHECK(eval_scalar(coral_loss(g, g.leaf(x), g.leaf(x))) == 0.0);

    const double r = std::sqrt(0.5);
    Tensor fs({2, 1}, {-r, r});                          // sample variance 1
    Tensor ft({2, 1}, {-std::sqrt(2.0), std::sqrt(2.0)});  // sample variance 4
    CHECK(eval_scalar(coral_loss(g, g.leaf(fs), g.leaf(ft))) ==
          doctest::Approx(2.25).epsilon(1e-12));

    for (int rep = 0; rep < 5; ++rep) {
        Tensor a = oracle::random_matrix(6, 4, rng);
        Tensor b = oracle::random_matrix(5, 4, rng);
        CHECK(eval_scalar(coral_loss(g, g.leaf(a), g.leaf(b))) ==
              doctest::Approx(oracle::coral_covariances(a, b)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(coral_loss(g, g.leaf(Tensor({1, 2})), g.leaf(Tensor({3, 2}))), ContractError);
}

TEST_CASE("gradient checks vs finite differences, 20+ instances per loss") {
    std::mt19937_64 rng(101);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 2 + rng() % 5;
        const std::vector<double> y = random_labels(n, rng);

        check_gradients({oracle::random_matrix(n, 1, rng, 2.0)},
                        [&](Graph& g, const std::vector<Var>& v) {
                            return hinge_loss(g, v[0], y);
                        });

        check_gradients({oracle::random_matrix(n, 1, rng, 2.0),
                         oracle::random_matrix(n, 1, rng, 2.0)},
                        [&](Graph& g, const std::vector<Var>& v) {
                            return svmplus_paired_loss(g, v[0], v[1], y, 1.5);
                        });

        const std::size_t m = 2 + rng() % 4, d = 2 + rng() % 3;
        check_gradients({oracle::random_matrix(n, d, rng), oracle::random_matrix(m, d, rng)},
                        [&](Graph& g, const std::vector<Var>& v) {
                            return mmd2_linear(g, v[0], v[1]);
                        });
        check_gradients({oracle::random_matrix(n, d, rng), oracle::random_matrix(m, d, rng)},
                        [&](Graph& g, const std::vector<Var>& v) {
                            return mmd2_rbf(g, v[0], v[1], {0.3, 1.2});
                        });
        check_gradients({oracle::random_matrix(n, d, rng), oracle::random_matrix(m, d, rng)},
                        [&](Graph& g, const std::vector<Var>& v) {
                            return coral_loss(g, v[0], v[1]);
                        });
    }
}

namespace {

struct TinySetup {
    NetworkParams src, tgt;
    DdstnBatches batches;
    Hyperparams hp;
};

TinySetup tiny_setup(std::mt19937_64& rng) {
    TinySetup s;
    const NetworkSpec spec{{LayerSpec::dense(4), LayerSpec::relu(), LayerSpec::dense(1)}, {3}};
    s.src = build_network(spec, rng());
    s.tgt = build_network(spec, rng());
    s.batches.xs_p = oracle::random_matrix(4, 3, rng);
    s.batches.xt_p = oracle::random_matrix(4, 3, rng);
    s.batches.y_p = random_labels(4, rng);
    s.batches.xt_u = oracle::random_matrix(5, 3, rng);
    s.batches.y_u = random_labels(5, rng);
    s.batches.source_pool = oracle::random_matrix(6, 3, rng);
    s.hp.C1 = 0.8;
    s.hp.C2 = 1.1;
    s.hp.lambda1 = 0.5;
    s.hp.lambda2 = 0.7;
    return s;
}

}  // namespace

TEST_CASE("ddstn objective zero-weight hand value") {
    TinySetup s;
    std::mt19937_64 rng(3);
    s = tiny_setup(rng);
    s.hp = Hyperparams{};  // unit weights, lambda2 irrelevant on zero features
    for (auto& net : {&s.src, &s.tgt})
        for (auto& l : net->layers)
            for (auto& t : l.tensors)
                for (double& v : t.values()) v = 0;
    Graph g;
    DdstnTerms terms = ddstn_objective(g, bind_network(g, s.src), bind_network(g, s.tgt),
                                       s.batches, s.hp, LupiCoupling::TargetDecision);
    CHECK(g.value(terms.total)[0] == doctest::Approx(2.0).epsilon(1e-14));  // C1*1 + C2*1
    CHECK(g.value(terms.mmd)[0] == 0.0);
    CHECK(g.value(terms.regularizer)[0] == 0.0);
}

TEST_CASE("ddstn objective equals independently composed parts") {
    std::mt19937_64 rng(7);
    TinySetup s = tiny_setup(rng);
    Graph g;
    DdstnTerms terms = ddstn_objective(g, bind_network(g, s.src), bind_network(g, s.tgt),
                                       s.batches, s.hp, LupiCoupling::TargetDecision);

    // recompose from scratch with separate graphs
    auto run = [](const NetworkParams& p, const Tensor& x) {
        Graph gg;
        ForwardResult fr = forward(gg, bind_network(gg, p), x);
        return std::make_pair(gg.value(fr.scores), gg.value(fr.features));
    };
    const auto [s_scores, s_feat] = run(s.src, s.batches.xs_p);
    const auto [tp_scores, tp_feat] = run(s.tgt, s.batches.xt_p);
    const auto [tu_scores, tu_feat] = run(s.tgt, s.batches.xt_u);
    const auto [pool_scores, pool_feat] = run(s.src, s.batches.source_pool);

    Graph g2;
    const double lupi = eval_scalar(
        svmplus_paired_loss(g2, g2.leaf(tp_scores), g2.leaf(s_scores), s.batches.y_p, s.hp.rho));
    const double hinge = eval_scalar(hinge_loss(g2, g2.leaf(tu_scores), s.batches.y_u));
    const double mmd = eval_scalar(mmd2_linear(g2, g2.leaf(pool_feat), g2.leaf(tu_feat)));
    double reg = 0;
    for (double v : s.tgt.final_weight().values()) reg += v * v;
    double reg_s = 0;
    for (double v : s.src.final_weight().values()) reg_s += v * v;
    reg = 0.5 * (reg + s.hp.lambda1 * reg_s);

    const double want = reg + s.hp.C1 * lupi + s.hp.C2 * hinge + s.hp.lambda2 * mmd;
    CHECK(g.value(terms.total)[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("ddstn objective with C1=lambda1=lambda2=0 is regularized hinge") {
    std::mt19937_64 rng(11);
    TinySetup s = tiny_setup(rng);
    s.hp.C1 = 0;
    s.hp.lambda1 = 0;
    s.hp.lambda2 = 0;
    Graph g;
    DdstnTerms terms = ddstn_objective(g, bind_network(g, s.src), bind_network(g, s.tgt),
                                       s.batches, s.hp);
    Graph g2;
    ForwardResult fr = forward(g2, bind_network(g2, s.tgt), s.batches.xt_u);
    double reg = 0;
    for (double v : s.tgt.final_weight().values()) reg += v * v;
    const double want = 0.5 * reg + s.hp.C2 * eval_scalar(hinge_loss(g2, fr.scores, s.batches.y_u));
    CHECK(g.value(terms.total)[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("ddstn objective with C2=lambda2=0 ignores unpaired inputs bit-exactly") {
    std::mt19937_64 rng(13);
    TinySetup s = tiny_setup(rng);
    s.hp.C2 = 0;
    s.hp.lambda2 = 0;
    auto value = [&](const Tensor& xtu) {
        DdstnBatches b = s.batches;
        b.xt_u = xtu;
        Graph g;
        return g.value(ddstn_objective(g, bind_network(g, s.src), bind_network(g, s.tgt), b,
                                       s.hp).total)[0];
    };
    const double v1 = value(s.batches.xt_u);
    const double v2 = value(oracle::random_matrix(5, 3, rng));
    CHECK(v1 == v2);
}

TEST_CASE("symmetric coupling is invariant under channel role swap") {
    std::mt19937_64 rng(17);
    TinySetup s = tiny_setup(rng);
    Graph g;
    NetworkVars sv = bind_network(g, s.src);
    NetworkVars tv = bind_network(g, s.tgt);
    ForwardResult fs = forward(g, sv, s.batches.xs_p);
    ForwardResult ft = forward(g, tv, s.batches.xt_p);
    const double ab =
        eval_scalar(svmplus_paired_loss(g, ft.scores, fs.scores, s.batches.y_p)) +
        eval_scalar(svmplus_paired_loss(g, fs.scores, ft.scores, s.batches.y_p));
    const double ba =
        eval_scalar(svmplus_paired_loss(g, fs.scores, ft.scores, s.batches.y_p)) +
        eval_scalar(svmplus_paired_loss(g, ft.scores, fs.scores, s.batches.y_p));
    CHECK(ab == ba);
}

TEST_CASE("full ddstn objective gradients pass finite differences") {
    std::mt19937_64 rng(211);
    for (int rep = 0; rep < 3; ++rep) {
        TinySetup s = tiny_setup(rng);
        std::vector<Tensor> init;
        for (const Tensor* t : s.src.all_tensors()) init.push_back(*t);
        for (const Tensor* t : s.tgt.all_tensors()) init.push_back(*t);

        auto rebuild = [&](const std::vector<double>& x) {
            NetworkParams src = s.src, tgt = s.tgt;
            std::size_t off = 0;
            for (Tensor* t : src.all_tensors())
                for (double& v : t->values()) v = x[off++];
            for (Tensor* t : tgt.all_tensors())
                for (double& v : t->values()) v = x[off++];
            return std::make_pair(src, tgt);
        };
        std::vector<double> flat;
        for (const auto& t : init) flat.insert(flat.end(), t.values().begin(), t.values().end());

        auto f = [&](const std::vector<double>& x) {
            auto [src, tgt] = rebuild(x);
            Graph g;
            return g.value(ddstn_objective(g, bind_network(g, src), bind_network(g, tgt),
                                           s.batches, s.hp, LupiCoupling::Symmetric).total)[0];
        };

        Graph g;
        NetworkVars sv = bind_network(g, s.src);
        NetworkVars tv = bind_network(g, s.tgt);
        g.backward(ddstn_objective(g, sv, tv, s.batches, s.hp, LupiCoupling::Symmetric).total);
        std::vector<double> ad;
        for (Var v : sv.all_vars())
            for (double gv : g.grad(v).values()) ad.push_back(gv);
        for (Var v : tv.all_vars())
            for (double gv : g.grad(v).values()) ad.push_back(gv);
        CHECK(oracle::max_rel_err(ad, oracle::finite_diff(f, flat)) <= 1e-4);
    }
}

TEST_CASE("hyperparameter validation") {
    Hyperparams hp;
    hp.C1 = -1;
    CHECK_THROWS_AS(hp.validate(), ConfigError);
    hp = Hyperparams{};
    hp.rho = 0;
    CHECK_THROWS_AS(hp.validate(), ConfigError);
    hp = Hyperparams{};
    hp.rbf_bandwidths = {1.0, -2.0};
    CHECK_THROWS_AS(hp.validate(), ConfigError);
}
