#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "network.hpp"
#include "tensor.hpp"

namespace ddstn {

enum class MmdKernel { Linear, Rbf };

struct Hyperparams {
    double C1 = 1.0;       // LUPI weight
    double C2 = 1.0;       // unpaired hinge weight
    double lambda1 = 1.0;  // correcting-capacity regularizer
    double lambda2 = 0.5;  // MMD weight
    double rho = 1.0;      // LUPI penalty weight
    MmdKernel mmd_kernel = MmdKernel::Linear;
    std::vector<double> rbf_bandwidths;  // empty -> median heuristic at train start
    bool include_paired_target = false;  // fold paired target into hinge pool and MMD pool

    void validate() const {
        if (C1 < 0 || C2 < 0 || lambda1 < 0 || lambda2 < 0)
            throw ConfigError("hyperparameter weights must be non-negative");
        if (rho <= 0) throw ConfigError("lupi penalty rho must be positive");
        for (double g : rbf_bandwidths)
            if (g <= 0) throw ConfigError("rbf bandwidths must be positive");
    }
};

namespace detail {

inline void check_labels(const std::vector<double>& labels) {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != 1.0 && labels[i] != -1.0)
            throw DataError("label at index " + std::to_string(i) + " is " +
                            std::to_string(labels[i]) + ", expected -1 or +1");
}

inline Var label_column(Graph& g, const std::vector<double>& labels) {
    return g.leaf(Tensor({labels.size(), 1}, labels));
}

inline Var ones_row(Graph& g, std::size_t n) {
    return g.leaf(Tensor({1, n}, 1.0));
}

inline Var row_mean(Graph& g, Var mat) {
    const std::size_t n = g.value(mat).rows();
    return g.scale(g.matmul(ones_row(g, n), mat), 1.0 / double(n));
}

// Pairwise squared distances: D[i][j] = |a_i|^2 + |b_j|^2 - 2 <a_i, b_j>.
inline Var pairwise_sqdist(Graph& g, Var a, Var b) {
    Var gram = g.matmul(a, g.transpose(b));
    Var ra = g.sum_axis1(g.square(a));
    Var rb = g.sum_axis1(g.square(b));
    return g.add_colvec(g.add_rowvec(g.scale(gram, -2.0), g.transpose(rb)), ra);
}

inline Var sample_covariance(Graph& g, Var x) {
    const std::size_t n = g.value(x).rows();
    Var mu = row_mean(g, x);
    Var centered = g.add_rowvec(x, g.scale(mu, -1.0));
    return g.scale(g.matmul(g.transpose(centered), centered), 1.0 / double(n - 1));
}

}  // namespace detail

/// mean_i max(0, 1 - y_i s_i)
inline Var hinge_loss(Graph& g, Var scores, const std::vector<double>& labels) {
    const Tensor& s = g.value(scores);
    if (labels.empty()) throw ContractError("hinge_loss on empty batch");
    if (s.numel() != labels.size())
        throw ContractError("hinge_loss: " + std::to_string(s.numel()) + " scores vs " +
                            std::to_string(labels.size()) + " labels");
    detail::check_labels(labels);
    Var ys = g.mul(g.reshape(scores, {labels.size(), 1}), detail::label_column(g, labels));
    return g.mean(g.relu(g.add_scalar(g.scale(ys, -1.0), 1.0)));
}

/// Penalty surrogate of the coupled SVM+ objective. The source-channel
/// output acts as the slack; the clamp enforces slack >= 0 and the second
/// hinge penalizes margin violation y_i f_t >= 1 - slack_i.
/// Regularizers are added by ddstn_objective, not here.
inline Var svmplus_paired_loss(Graph& g, Var target_scores, Var slack,
                               const std::vector<double>& labels, double rho = 1.0) {
    const std::size_t n = labels.size();
    if (n == 0) throw ContractError("svmplus_paired_loss on empty batch");
    if (g.value(target_scores).numel() != n || g.value(slack).numel() != n)
        throw ContractError("svmplus_paired_loss: scores/slack/labels length mismatch");
    detail::check_labels(labels);
    Var xi = g.relu(g.reshape(slack, {n, 1}));
    Var ys = g.mul(g.reshape(target_scores, {n, 1}), detail::label_column(g, labels));
    Var violation = g.relu(g.sub(g.add_scalar(g.scale(ys, -1.0), 1.0), xi));
    return g.mean(g.add(xi, g.scale(violation, rho)));
}

/// Squared distance of feature means.
inline Var mmd2_linear(Graph& g, Var fs, Var ft) {
    const Tensor& a = g.value(fs);
    const Tensor& b = g.value(ft);
    if (a.cols() != b.cols())
        throw ContractError("mmd2_linear: feature dims " + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.cols()));
    if (a.rows() == 0 || b.rows() == 0) throw ContractError("mmd2_linear on empty set");
    Var diff = g.sub(detail::row_mean(g, fs), detail::row_mean(g, ft));
    return g.sum(g.square(diff));
}

/// Biased multi-kernel estimator averaged over the bandwidth bank:
/// mean_gamma [ mean(K_ss) + mean(K_tt) - 2 mean(K_st) ].
inline Var mmd2_rbf(Graph& g, Var fs, Var ft, const std::vector<double>& bandwidths) {
    if (bandwidths.empty()) throw ConfigError("mmd2_rbf: empty bandwidth list");
    for (double gamma : bandwidths)
        if (gamma <= 0) throw ConfigError("mmd2_rbf: non-positive bandwidth");
    const Tensor& a = g.value(fs);
    const Tensor& b = g.value(ft);
    if (a.cols() != b.cols())
        throw ContractError("mmd2_rbf: feature dims " + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.cols()));
    if (a.rows() == 0 || b.rows() == 0) throw ContractError("mmd2_rbf on empty set");
    Var d_ss = detail::pairwise_sqdist(g, fs, fs);
    Var d_tt = detail::pairwise_sqdist(g, ft, ft);
    Var d_st = detail::pairwise_sqdist(g, fs, ft);
    Var total{};
    bool first = true;
    for (double gamma : bandwidths) {
        Var k_ss = g.mean(g.exp_(g.scale(d_ss, -gamma)));
        Var k_tt = g.mean(g.exp_(g.scale(d_tt, -gamma)));
        Var k_st = g.mean(g.exp_(g.scale(d_st, -gamma)));
        Var term = g.add(g.add(k_ss, k_tt), g.scale(k_st, -2.0));
        total = first ? term : g.add(total, term);
        first = false;
    }
    return g.scale(total, 1.0 / double(bandwidths.size()));
}

/// Squared Frobenius distance of sample covariances, scaled by 1/(4 d^2).
inline Var coral_loss(Graph& g, Var fs, Var ft) {
    const Tensor& a = g.value(fs);
    const Tensor& b = g.value(ft);
    if (a.cols() != b.cols())
        throw ContractError("coral_loss: feature dims " + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.cols()));
    if (a.rows() < 2 || b.rows() < 2)
        throw ContractError("coral_loss needs at least 2 samples per side");
    const double d = double(a.cols());
    Var cs = detail::sample_covariance(g, fs);
    Var ct = detail::sample_covariance(g, ft);
    return g.scale(g.sum(g.square(g.sub(cs, ct))), 1.0 / (4.0 * d * d));
}

/// Median-heuristic RBF bandwidth from pairwise distances of the pooled rows:
/// gamma = 1 / (2 median^2).
inline double median_heuristic_gamma(const Tensor& fs, const Tensor& ft) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < fs.rows(); ++i) {
        std::vector<double> r(fs.cols());
        for (std::size_t j = 0; j < fs.cols(); ++j) r[j] = fs.at(i, j);
        rows.push_back(std::move(r));
    }
    for (std::size_t i = 0; i < ft.rows(); ++i) {
        std::vector<double> r(ft.cols());
        for (std::size_t j = 0; j < ft.cols(); ++j) r[j] = ft.at(i, j);
        rows.push_back(std::move(r));
    }
    std::vector<double> dists;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < rows[i].size(); ++k) {
                const double d = rows[i][k] - rows[j][k];
                s += d * d;
            }
            dists.push_back(std::sqrt(s));
        }
    if (dists.empty()) return 1.0;
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    const double med = dists[dists.size() / 2];
    if (med <= 0.0) return 1.0;
    return 1.0 / (2.0 * med * med);
}

inline std::vector<double> multi_kernel_bank(double gamma) {
    return {0.25 * gamma, 0.5 * gamma, gamma, 2.0 * gamma, 4.0 * gamma};
}

enum class LupiCoupling { TargetDecision, SourceDecision, Symmetric };

struct DdstnBatches {
    Tensor xs_p;               // paired source inputs
    Tensor xt_p;               // paired target inputs
    std::vector<double> y_p;   // shared labels
    Tensor xt_u;               // unpaired target inputs
    std::vector<double> y_u;   // unpaired labels
    Tensor source_pool;        // full source pool for the MMD source side
};

struct DdstnTerms {
    Var total;
    Var regularizer;
    Var lupi;
    Var unpaired_hinge;
    Var mmd;
};

/// Combined doubly supervised objective:
///   1/2 (|W_t|^2 + lambda1 |W_s|^2) + C1 * lupi + C2 * hinge + lambda2 * mmd2.
/// MMD runs on penultimate features; the source side is the full source pool.
inline DdstnTerms ddstn_objective(Graph& g, const NetworkVars& source_net,
                                  const NetworkVars& target_net, const DdstnBatches& b,
                                  const Hyperparams& hp,
                                  LupiCoupling coupling = LupiCoupling::TargetDecision) {
    hp.validate();
    if (b.y_p.empty()) throw ContractError("ddstn_objective: empty paired batch");
    if (b.y_u.empty()) throw ContractError("ddstn_objective: empty unpaired batch");

    Var reg = g.scale(g.add(g.sum(g.square(target_net.final_weight())),
                            g.scale(g.sum(g.square(source_net.final_weight())), hp.lambda1)),
                      0.5);

    ForwardResult src_p = forward(g, source_net, b.xs_p);
    ForwardResult tgt_p = forward(g, target_net, b.xt_p);
    ForwardResult tgt_u = forward(g, target_net, b.xt_u);

    Var lupi{};
    switch (coupling) {
        case LupiCoupling::TargetDecision:
            lupi = svmplus_paired_loss(g, tgt_p.scores, src_p.scores, b.y_p, hp.rho);
            break;
        case LupiCoupling::SourceDecision:
            lupi = svmplus_paired_loss(g, src_p.scores, tgt_p.scores, b.y_p, hp.rho);
            break;
        case LupiCoupling::Symmetric:
            lupi = g.add(svmplus_paired_loss(g, tgt_p.scores, src_p.scores, b.y_p, hp.rho),
                         svmplus_paired_loss(g, src_p.scores, tgt_p.scores, b.y_p, hp.rho));
            break;
    }

    Var hinge{};
    Var target_features = tgt_u.features;
    if (hp.include_paired_target) {
        Var scores = g.concat_rows({tgt_p.scores, tgt_u.scores});
        std::vector<double> labels = b.y_p;
        labels.insert(labels.end(), b.y_u.begin(), b.y_u.end());
        hinge = hinge_loss(g, scores, labels);
        target_features = g.concat_rows({tgt_p.features, tgt_u.features});
    } else {
        hinge = hinge_loss(g, tgt_u.scores, b.y_u);
    }

    ForwardResult pool = forward(g, source_net, b.source_pool);
    Var mmd{};
    if (hp.mmd_kernel == MmdKernel::Linear) {
        mmd = mmd2_linear(g, pool.features, target_features);
    } else {
        std::vector<double> bank = hp.rbf_bandwidths;
        if (bank.empty())
            bank = {median_heuristic_gamma(g.value(pool.features), g.value(target_features))};
        mmd = mmd2_rbf(g, pool.features, target_features, bank);
    }

    Var total = g.add(g.add(reg, g.scale(lupi, hp.C1)),
                      g.add(g.scale(hinge, hp.C2), g.scale(mmd, hp.lambda2)));
    return {total, reg, lupi, hinge, mmd};
}

}  // namespace ddstn
