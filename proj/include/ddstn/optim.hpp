#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace ddstn {

struct OptimizerConfig {
    enum class Method { Sgd, Adam };
    Method method = Method::Adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    OptimizerConfig cfg;
    std::vector<Tensor> m;  // first moments (adam)
    std::vector<Tensor> v;  // second moments (adam)
    std::size_t step = 0;
};

inline OptimizerState make_optimizer(const OptimizerConfig& cfg,
                                     const std::vector<Tensor*>& params) {
    OptimizerState st;
    st.cfg = cfg;
    if (cfg.method == OptimizerConfig::Method::Adam) {
        for (const Tensor* p : params) {
            st.m.emplace_back(p->shape());
            st.v.emplace_back(p->shape());
        }
    }
    return st;
}

inline void optimizer_step(const std::vector<Tensor*>& params,
                           const std::vector<const Tensor*>& grads, OptimizerState& st) {
    if (params.size() != grads.size())
        throw ContractError("optimizer_step: param/grad count mismatch");
    ++st.step;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(g))
            throw ContractError("optimizer_step: shape mismatch at parameter " +
                                std::to_string(i) + ": " + Tensor::shape_str(p.shape()) +
                                " vs " + Tensor::shape_str(g.shape()));
        if (st.cfg.method == OptimizerConfig::Method::Sgd) {
            for (std::size_t j = 0; j < p.numel(); ++j) p[j] -= st.cfg.lr * g[j];
        } else {
            Tensor& m = st.m[i];
            Tensor& v = st.v[i];
            const double bc1 = 1.0 - std::pow(st.cfg.beta1, double(st.step));
            const double bc2 = 1.0 - std::pow(st.cfg.beta2, double(st.step));
            for (std::size_t j = 0; j < p.numel(); ++j) {
                m[j] = st.cfg.beta1 * m[j] + (1.0 - st.cfg.beta1) * g[j];
                v[j] = st.cfg.beta2 * v[j] + (1.0 - st.cfg.beta2) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                p[j] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
            }
        }
    }
}

}  // namespace ddstn
