#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "datagen.hpp"
#include "losses.hpp"
#include "network.hpp"
#include "optim.hpp"

namespace ddstn {

enum class Algorithm { Ddstn, CnnSvm, CnnSvmPlus, Ddc, Dan, DeepCoral };

inline std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::Ddstn: return "ddstn";
        case Algorithm::CnnSvm: return "cnn_svm";
        case Algorithm::CnnSvmPlus: return "cnn_svm_plus";
        case Algorithm::Ddc: return "ddc";
        case Algorithm::Dan: return "dan";
        case Algorithm::DeepCoral: return "deep_coral";
    }
    throw ConfigError("unknown algorithm");
}

inline Algorithm algorithm_from_name(const std::string& name) {
    for (Algorithm a : {Algorithm::Ddstn, Algorithm::CnnSvm, Algorithm::CnnSvmPlus,
                        Algorithm::Ddc, Algorithm::Dan, Algorithm::DeepCoral})
        if (algorithm_name(a) == name) return a;
    throw ConfigError("unknown algorithm '" + name + "'");
}

enum class CouplingMode { Symmetric, EpochAlternate };

struct TrainConfig {
    std::size_t epochs = 150;
    std::size_t paired_batch_size = 32;
    std::size_t unpaired_batch_size = 32;
    OptimizerConfig optimizer;
    Hyperparams hp;
    CouplingMode coupling = CouplingMode::Symmetric;
    std::size_t feature_dim = 32;
    std::uint64_t seed = 0;

    void validate() const {
        if (paired_batch_size < 1 || unpaired_batch_size < 1)
            throw ConfigError("batch sizes must be >= 1");
        hp.validate();
    }
};

struct TrainedModel {
    Algorithm algorithm = Algorithm::Ddstn;
    NetworkParams target;
    NetworkParams source;  // empty for algorithms that never touch the source channel
    std::vector<double> loss_history;  // mean minibatch loss per epoch
    TrainConfig config;
    Hyperparams effective_hp;  // config hp with any frozen bandwidth bank filled in
};

namespace detail {

// Shuffled index stream; reshuffles and recycles when exhausted.
class IndexStream {
public:
    IndexStream(std::size_t n, std::mt19937_64& rng) : rng_(&rng) {
        idx_.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx_[i] = i;
    }

    void start_epoch() {
        std::shuffle(idx_.begin(), idx_.end(), *rng_);
        cursor_ = 0;
    }

    std::vector<std::size_t> next(std::size_t batch) {
        if (cursor_ >= idx_.size()) {
            std::shuffle(idx_.begin(), idx_.end(), *rng_);
            cursor_ = 0;
        }
        const std::size_t take = std::min(batch, idx_.size() - cursor_);
        std::vector<std::size_t> out(idx_.begin() + cursor_, idx_.begin() + cursor_ + take);
        cursor_ += take;
        return out;
    }

    std::size_t size() const { return idx_.size(); }

private:
    std::vector<std::size_t> idx_;
    std::size_t cursor_ = 0;
    std::mt19937_64* rng_;
};

struct Pools {
    // flat feature rows; batches are assembled per step
    std::vector<const std::vector<double>*> xs_p, xt_p, xt_u, xt_all;
    std::vector<double> y_p, y_u, y_all;
};

inline Pools collect_pools(const BimodalDataset& ds) {
    Pools p;
    for (const auto& r : ds.paired) {
        p.xs_p.push_back(&r.x_s);
        p.xt_p.push_back(&r.x_t);
        p.y_p.push_back(double(r.label));
        p.xt_all.push_back(&r.x_t);
        p.y_all.push_back(double(r.label));
    }
    for (const auto& r : ds.unpaired) {
        p.xt_u.push_back(&r.x_t);
        p.y_u.push_back(double(r.label));
        p.xt_all.push_back(&r.x_t);
        p.y_all.push_back(double(r.label));
    }
    return p;
}

inline Tensor gather(const BimodalDataset& ds, const std::vector<const std::vector<double>*>& pool,
                     const std::vector<std::size_t>& idx, std::size_t dim) {
    std::vector<const std::vector<double>*> rows;
    rows.reserve(idx.size());
    for (std::size_t i : idx) rows.push_back(pool[i]);
    return ds.stack(rows, dim);
}

inline std::vector<double> gather_labels(const std::vector<double>& pool,
                                         const std::vector<std::size_t>& idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(pool[i]);
    return out;
}

inline bool uses_source_channel(Algorithm a) { return a != Algorithm::CnnSvm; }

// Eager penultimate features, no backward.
inline Tensor eval_features(const NetworkParams& net, const Tensor& batch) {
    Graph g;
    NetworkVars nv = bind_network(g, net);
    ForwardResult fr = forward(g, nv, batch);
    return g.value(fr.features);
}

inline std::vector<double> frozen_bandwidths(Algorithm algo, const Hyperparams& hp,
                                             const NetworkParams& src, const NetworkParams& tgt,
                                             const Tensor& src_batch, const Tensor& tgt_batch) {
    if (!hp.rbf_bandwidths.empty()) return hp.rbf_bandwidths;
    const double gamma = median_heuristic_gamma(eval_features(src, src_batch),
                                                eval_features(tgt, tgt_batch));
    if (algo == Algorithm::Dan) return multi_kernel_bank(gamma);
    return {gamma};
}

}  // namespace detail

/// Shared training loop for DDSTN and the baseline suite. Deterministic in
/// (dataset, specs, cfg).
inline TrainedModel train(Algorithm algo, const BimodalDataset& ds, const NetworkSpec& source_spec,
                          const NetworkSpec& target_spec, const TrainConfig& cfg) {
    cfg.validate();
    if (ds.unpaired.empty()) throw DataError("training requires unpaired data");
    if (ds.paired.empty() && (detail::uses_source_channel(algo) || algo == Algorithm::CnnSvm))
        throw DataError("training requires paired data");

    const std::size_t phi_t = validate_spec(target_spec);
    NetworkParams target = build_network(target_spec, cfg.seed);
    NetworkParams source;
    if (detail::uses_source_channel(algo)) {
        const std::size_t phi_s = validate_spec(source_spec);
        if (phi_s != phi_t)
            throw ConfigError("source/target feature dims differ: " + std::to_string(phi_s) +
                              " vs " + std::to_string(phi_t));
        source = build_network(source_spec, cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    }

    detail::Pools pools = detail::collect_pools(ds);
    const Tensor source_pool_all =
        detail::uses_source_channel(algo)
            ? [&] {
                  std::vector<std::size_t> all(pools.xs_p.size());
                  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
                  return detail::gather(ds, pools.xs_p, all, ds.dim_s);
              }()
            : Tensor();

    Hyperparams hp = cfg.hp;
    const bool needs_rbf = (algo == Algorithm::Ddc || algo == Algorithm::Dan ||
                            (algo == Algorithm::Ddstn && hp.mmd_kernel == MmdKernel::Rbf));
    if (needs_rbf && cfg.epochs > 0) {
        // freeze the bandwidth bank on the full initial feature pools
        const Tensor tgt_pool = detail::gather(
            ds, pools.xt_u,
            [&] {
                std::vector<std::size_t> all(pools.xt_u.size());
                for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
                return all;
            }(),
            ds.dim_t);
        hp.rbf_bandwidths =
            detail::frozen_bandwidths(algo, hp, source, target, source_pool_all, tgt_pool);
        if (algo == Algorithm::Ddstn) hp.mmd_kernel = MmdKernel::Rbf;
    }

    // one rng per stream so the shuffles are genuinely independent and an
    // algorithm's draws don't depend on streams it never reads
    std::mt19937_64 rng_p(cfg.seed ^ 0xC2B2AE3D27D4EB4FULL);
    std::mt19937_64 rng_u(cfg.seed ^ 0xA0761D6478BD642FULL);
    std::mt19937_64 rng_a(cfg.seed ^ 0xE7037ED1A0B428DBULL);
    detail::IndexStream paired_stream(pools.xs_p.size(), rng_p);
    detail::IndexStream unpaired_stream(pools.xt_u.size(), rng_u);
    detail::IndexStream all_stream(pools.xt_all.size(), rng_a);

    std::vector<Tensor*> params = target.all_tensors();
    {
        auto src_params = source.all_tensors();
        params.insert(params.end(), src_params.begin(), src_params.end());
    }
    OptimizerState opt = make_optimizer(cfg.optimizer, params);

    TrainedModel model;
    model.algorithm = algo;
    model.config = cfg;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        paired_stream.start_epoch();
        unpaired_stream.start_epoch();
        all_stream.start_epoch();

        std::size_t steps = 0;
        auto per = [](std::size_t n, std::size_t b) { return (n + b - 1) / b; };
        switch (algo) {
            case Algorithm::CnnSvm:
                steps = per(pools.xt_all.size(), cfg.unpaired_batch_size);
                break;
            case Algorithm::CnnSvmPlus:
            case Algorithm::Ddstn:
                steps = std::max(per(pools.xs_p.size(), cfg.paired_batch_size),
                                 per(pools.xt_u.size(), cfg.unpaired_batch_size));
                break;
            case Algorithm::Ddc:
            case Algorithm::Dan:
            case Algorithm::DeepCoral:
                steps = std::max(per(pools.xt_all.size(), cfg.unpaired_batch_size),
                                 per(pools.xs_p.size(), cfg.paired_batch_size));
                break;
        }

        double epoch_loss = 0.0;
        for (std::size_t step = 0; step < steps; ++step) {
            Graph g;
            NetworkVars tgt_vars = bind_network(g, target);
            NetworkVars src_vars;
            if (detail::uses_source_channel(algo)) src_vars = bind_network(g, source);

            Var loss{};
            switch (algo) {
                case Algorithm::Ddstn: {
                    const auto pb = paired_stream.next(cfg.paired_batch_size);
                    const auto ub = unpaired_stream.next(cfg.unpaired_batch_size);
                    DdstnBatches b;
                    b.xs_p = detail::gather(ds, pools.xs_p, pb, ds.dim_s);
                    b.xt_p = detail::gather(ds, pools.xt_p, pb, ds.dim_t);
                    b.y_p = detail::gather_labels(pools.y_p, pb);
                    b.xt_u = detail::gather(ds, pools.xt_u, ub, ds.dim_t);
                    b.y_u = detail::gather_labels(pools.y_u, ub);
                    b.source_pool = source_pool_all;
                    LupiCoupling coupling = LupiCoupling::Symmetric;
                    if (cfg.coupling == CouplingMode::EpochAlternate)
                        coupling = (epoch % 2 == 0) ? LupiCoupling::TargetDecision
                                                    : LupiCoupling::SourceDecision;
                    loss = ddstn_objective(g, src_vars, tgt_vars, b, hp, coupling).total;
                    break;
                }
                case Algorithm::CnnSvm: {
                    const auto ab = all_stream.next(cfg.unpaired_batch_size);
                    ForwardResult fr =
                        forward(g, tgt_vars, detail::gather(ds, pools.xt_all, ab, ds.dim_t));
                    Var reg = g.scale(g.sum(g.square(tgt_vars.final_weight())), 0.5);
                    loss = g.add(reg, g.scale(hinge_loss(g, fr.scores,
                                                         detail::gather_labels(pools.y_all, ab)),
                                              hp.C2));
                    break;
                }
                case Algorithm::CnnSvmPlus: {
                    const auto pb = paired_stream.next(cfg.paired_batch_size);
                    const auto ub = unpaired_stream.next(cfg.unpaired_batch_size);
                    ForwardResult fs =
                        forward(g, src_vars, detail::gather(ds, pools.xs_p, pb, ds.dim_s));
                    ForwardResult ftp =
                        forward(g, tgt_vars, detail::gather(ds, pools.xt_p, pb, ds.dim_t));
                    ForwardResult ftu =
                        forward(g, tgt_vars, detail::gather(ds, pools.xt_u, ub, ds.dim_t));
                    const auto y_p = detail::gather_labels(pools.y_p, pb);
                    Var lupi{};
                    if (cfg.coupling == CouplingMode::Symmetric) {
                        lupi = g.add(svmplus_paired_loss(g, ftp.scores, fs.scores, y_p, hp.rho),
                                     svmplus_paired_loss(g, fs.scores, ftp.scores, y_p, hp.rho));
                    } else {
                        lupi = (epoch % 2 == 0)
                                   ? svmplus_paired_loss(g, ftp.scores, fs.scores, y_p, hp.rho)
                                   : svmplus_paired_loss(g, fs.scores, ftp.scores, y_p, hp.rho);
                    }
                    Var reg = g.scale(
                        g.add(g.sum(g.square(tgt_vars.final_weight())),
                              g.scale(g.sum(g.square(src_vars.final_weight())), hp.lambda1)),
                        0.5);
                    Var hinge =
                        hinge_loss(g, ftu.scores, detail::gather_labels(pools.y_u, ub));
                    loss = g.add(reg, g.add(g.scale(lupi, hp.C1), g.scale(hinge, hp.C2)));
                    break;
                }
                case Algorithm::Ddc:
                case Algorithm::Dan:
                case Algorithm::DeepCoral: {
                    const auto ab = all_stream.next(cfg.unpaired_batch_size);
                    const auto pb = paired_stream.next(cfg.paired_batch_size);
                    const auto ub = unpaired_stream.next(cfg.unpaired_batch_size);
                    ForwardResult hinge_fr =
                        forward(g, tgt_vars, detail::gather(ds, pools.xt_all, ab, ds.dim_t));
                    ForwardResult fs =
                        forward(g, src_vars, detail::gather(ds, pools.xs_p, pb, ds.dim_s));
                    ForwardResult ft =
                        forward(g, tgt_vars, detail::gather(ds, pools.xt_u, ub, ds.dim_t));
                    Var dist{};
                    if (algo == Algorithm::DeepCoral)
                        dist = coral_loss(g, fs.features, ft.features);
                    else
                        dist = mmd2_rbf(g, fs.features, ft.features, hp.rbf_bandwidths);
                    Var reg = g.scale(g.sum(g.square(tgt_vars.final_weight())), 0.5);
                    Var hinge = hinge_loss(g, hinge_fr.scores,
                                           detail::gather_labels(pools.y_all, ab));
                    loss = g.add(reg, g.add(g.scale(hinge, hp.C2), g.scale(dist, hp.lambda2)));
                    break;
                }
            }

            g.backward(loss);
            epoch_loss += g.value(loss)[0];

            std::vector<const Tensor*> grads;
            for (Var v : tgt_vars.all_vars()) grads.push_back(&g.grad(v));
            if (detail::uses_source_channel(algo))
                for (Var v : src_vars.all_vars()) grads.push_back(&g.grad(v));
            optimizer_step(params, grads, opt);
        }
        model.loss_history.push_back(epoch_loss / double(steps));
    }

    model.target = std::move(target);
    model.source = std::move(source);
    model.effective_hp = hp;
    return model;
}

inline TrainedModel train_ddstn(const BimodalDataset& ds, const NetworkSpec& source_spec,
                                const NetworkSpec& target_spec, const TrainConfig& cfg) {
    return train(Algorithm::Ddstn, ds, source_spec, target_spec, cfg);
}

inline TrainedModel train_baseline(Algorithm kind, const BimodalDataset& ds,
                                   const NetworkSpec& source_spec, const NetworkSpec& target_spec,
                                   const TrainConfig& cfg) {
    if (kind == Algorithm::Ddstn) throw ConfigError("ddstn is not a baseline");
    return train(kind, ds, source_spec, target_spec, cfg);
}

/// Training history CSV: epoch,loss
inline void save_history_csv(const TrainedModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "epoch,loss\n";
    for (std::size_t i = 0; i < model.loss_history.size(); ++i)
        out << i << "," << detail::fmt17(model.loss_history[i]) << "\n";
}

}  // namespace ddstn
