#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "json.hpp"
#include "tensor.hpp"

namespace ddstn {

struct LayerSpec {
    enum class Kind { Dense, Conv, MaxPool2, Relu, Flatten };
    Kind kind;
    std::size_t out_dim = 0;   // Dense
    std::size_t ksize = 0;     // Conv
    std::size_t channels = 0;  // Conv

    static LayerSpec dense(std::size_t out) { return {Kind::Dense, out, 0, 0}; }
    static LayerSpec conv(std::size_t k, std::size_t ch) { return {Kind::Conv, 0, k, ch}; }
    static LayerSpec maxpool2() { return {Kind::MaxPool2, 0, 0, 0}; }
    static LayerSpec relu() { return {Kind::Relu, 0, 0, 0}; }
    static LayerSpec flatten() { return {Kind::Flatten, 0, 0, 0}; }
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    std::vector<std::size_t> input_shape;  // {d} vector mode, {h, w} image mode

    bool image_mode() const { return input_shape.size() == 2; }
};

/// dense(64)-relu-dense(32)-relu-dense(1)
inline NetworkSpec default_vector_spec(std::size_t input_dim, std::size_t feature_dim = 32) {
    return {{LayerSpec::dense(64), LayerSpec::relu(), LayerSpec::dense(feature_dim),
             LayerSpec::relu(), LayerSpec::dense(1)},
            {input_dim}};
}

/// conv(3,8)-relu-maxpool2-flatten-dense(32)-relu-dense(1)
inline NetworkSpec default_image_spec(std::size_t h, std::size_t w, std::size_t feature_dim = 32) {
    return {{LayerSpec::conv(3, 8), LayerSpec::relu(), LayerSpec::maxpool2(),
             LayerSpec::flatten(), LayerSpec::dense(feature_dim), LayerSpec::relu(),
             LayerSpec::dense(1)},
            {h, w}};
}

namespace detail {

struct ShapeState {
    bool flat;
    std::size_t dim;       // when flat
    std::size_t channels;  // when not flat
    std::size_t h, w;
};

inline ShapeState initial_state(const NetworkSpec& spec) {
    if (spec.input_shape.size() == 1) return {true, spec.input_shape[0], 0, 0, 0};
    if (spec.input_shape.size() == 2) return {false, 0, 1, spec.input_shape[0], spec.input_shape[1]};
    throw ConfigError("network input shape must be 1-d or 2-d, got " +
                      Tensor::shape_str(spec.input_shape));
}

inline void advance_state(ShapeState& st, const LayerSpec& l, std::size_t layer_idx) {
    const std::string where = "layer " + std::to_string(layer_idx);
    switch (l.kind) {
        case LayerSpec::Kind::Dense:
            if (!st.flat) throw ConfigError(where + ": dense applied to unflattened activations");
            if (l.out_dim == 0) throw ConfigError(where + ": dense out_dim must be positive");
            st.dim = l.out_dim;
            break;
        case LayerSpec::Kind::Conv:
            if (st.flat) throw ConfigError(where + ": conv applied to flat activations");
            if (st.channels != 1) throw ConfigError(where + ": conv supports single-channel input only");
            if (l.ksize == 0 || l.channels == 0) throw ConfigError(where + ": conv needs k > 0, channels > 0");
            if (l.ksize > st.h || l.ksize > st.w)
                throw ConfigError(where + ": conv kernel exceeds input size");
            st.h -= l.ksize - 1;
            st.w -= l.ksize - 1;
            st.channels = l.channels;
            break;
        case LayerSpec::Kind::MaxPool2:
            if (st.flat) throw ConfigError(where + ": maxpool2 applied to flat activations");
            if (st.h < 2 || st.w < 2) throw ConfigError(where + ": maxpool2 input too small");
            st.h /= 2;
            st.w /= 2;
            break;
        case LayerSpec::Kind::Relu:
            break;
        case LayerSpec::Kind::Flatten:
            if (st.flat) break;
            st.dim = st.channels * st.h * st.w;
            st.flat = true;
            st.channels = 0;
            break;
    }
}

}  // namespace detail

/// Shape-checks a spec. Returns the penultimate (feature) dimension.
inline std::size_t validate_spec(const NetworkSpec& spec) {
    if (spec.layers.empty()) throw ConfigError("network spec has no layers");
    const LayerSpec& last = spec.layers.back();
    if (last.kind != LayerSpec::Kind::Dense || last.out_dim != 1)
        throw ConfigError("final layer must be dense(1)");
    detail::ShapeState st = detail::initial_state(spec);
    std::size_t feature_dim = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (i + 1 == spec.layers.size()) {
            if (!st.flat) throw ConfigError("activations not flat before final dense layer");
            feature_dim = st.dim;
        }
        detail::advance_state(st, spec.layers[i], i);
    }
    return feature_dim;
}

struct LayerParams {
    std::vector<Tensor> tensors;
};

struct NetworkParams {
    NetworkSpec spec;
    std::vector<LayerParams> layers;  // one entry per LayerSpec (empty for param-free layers)

    bool empty() const { return layers.empty(); }

    /// Final dense layer weight (in x 1) and bias (1 x 1).
    const Tensor& final_weight() const { return layers.back().tensors[0]; }
    const Tensor& final_bias() const { return layers.back().tensors[1]; }

    std::vector<Tensor*> all_tensors() {
        std::vector<Tensor*> out;
        for (auto& l : layers)
            for (auto& t : l.tensors) out.push_back(&t);
        return out;
    }
    std::vector<const Tensor*> all_tensors() const {
        std::vector<const Tensor*> out;
        for (auto& l : layers)
            for (auto& t : l.tensors) out.push_back(&t);
        return out;
    }
};

namespace detail {

// Fixed 53-bit uniform draw so parameter init is engine-stable.
inline double uniform01(std::mt19937_64& rng) {
    return double(rng() >> 11) * (1.0 / 9007199254740992.0);
}

inline void fill_uniform(Tensor& t, double s, std::mt19937_64& rng) {
    for (double& v : t.values()) v = (2.0 * uniform01(rng) - 1.0) * s;
}

}  // namespace detail

/// Scaled-uniform init: weights in [-s, s], s = sqrt(6 / (fan_in + fan_out)),
/// biases zero. Deterministic in seed.
inline NetworkParams build_network(const NetworkSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    std::mt19937_64 rng(seed);
    NetworkParams params;
    params.spec = spec;
    detail::ShapeState st = detail::initial_state(spec);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        LayerParams lp;
        if (l.kind == LayerSpec::Kind::Dense) {
            const std::size_t fan_in = st.dim, fan_out = l.out_dim;
            const double s = std::sqrt(6.0 / double(fan_in + fan_out));
            Tensor W({fan_in, fan_out});
            detail::fill_uniform(W, s, rng);
            lp.tensors.push_back(std::move(W));
            lp.tensors.push_back(Tensor({1, fan_out}));
        } else if (l.kind == LayerSpec::Kind::Conv) {
            const std::size_t fan_in = l.ksize * l.ksize;
            const std::size_t fan_out = l.ksize * l.ksize * l.channels;
            const double s = std::sqrt(6.0 / double(fan_in + fan_out));
            for (std::size_t c = 0; c < l.channels; ++c) {
                Tensor K({l.ksize, l.ksize});
                detail::fill_uniform(K, s, rng);
                lp.tensors.push_back(std::move(K));
            }
            for (std::size_t c = 0; c < l.channels; ++c) lp.tensors.push_back(Tensor({1, 1}));
        }
        params.layers.push_back(std::move(lp));
        detail::advance_state(st, l, i);
    }
    return params;
}

/// Graph-bound parameter leaves for one network. Created once per graph so
/// multiple forwards of the same channel accumulate into the same gradients.
struct NetworkVars {
    const NetworkParams* params = nullptr;
    std::vector<std::vector<Var>> layers;

    Var final_weight() const { return layers.back()[0]; }
    Var final_bias() const { return layers.back()[1]; }

    std::vector<Var> all_vars() const {
        std::vector<Var> out;
        for (const auto& l : layers)
            for (Var v : l) out.push_back(v);
        return out;
    }
};

inline NetworkVars bind_network(Graph& g, const NetworkParams& params) {
    NetworkVars nv;
    nv.params = &params;
    for (const auto& l : params.layers) {
        std::vector<Var> vars;
        vars.reserve(l.tensors.size());
        for (const auto& t : l.tensors) vars.push_back(g.leaf(t));
        nv.layers.push_back(std::move(vars));
    }
    return nv;
}

struct ForwardResult {
    Var features;  // n x d_phi, penultimate activations
    Var scores;    // n x 1
};

namespace detail {

inline Var forward_flat(Graph& g, const NetworkVars& nv, Var x, std::size_t first_layer,
                        Var* features_out) {
    const NetworkSpec& spec = nv.params->spec;
    for (std::size_t i = first_layer; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (i + 1 == spec.layers.size() && features_out) *features_out = x;
        switch (l.kind) {
            case LayerSpec::Kind::Dense:
                x = g.add_rowvec(g.matmul(x, nv.layers[i][0]), nv.layers[i][1]);
                break;
            case LayerSpec::Kind::Relu:
                x = g.relu(x);
                break;
            case LayerSpec::Kind::Flatten:
                break;
            default:
                throw ConfigError("conv/pool layer after flatten");
        }
    }
    return x;
}

}  // namespace detail

/// Runs a batch through one channel. scores[i] = <W, features[i]> + b.
inline ForwardResult forward(Graph& g, const NetworkVars& nv, const Tensor& batch) {
    const NetworkSpec& spec = nv.params->spec;
    if (!spec.image_mode()) {
        if (batch.ndim() != 2 || batch.cols() != spec.input_shape[0])
            throw DimensionError("forward: batch shape " + Tensor::shape_str(batch.shape()) +
                                 " does not match input dim " +
                                 std::to_string(spec.input_shape[0]));
        Var x = g.leaf(batch);
        Var features{};
        Var scores = detail::forward_flat(g, nv, x, 0, &features);
        return {features, scores};
    }

    const std::size_t h = spec.input_shape[0], w = spec.input_shape[1];
    if (batch.ndim() != 3 || batch.shape()[1] != h || batch.shape()[2] != w)
        throw DimensionError("forward: image batch shape " + Tensor::shape_str(batch.shape()) +
                             " does not match input " + std::to_string(h) + "x" +
                             std::to_string(w));
    const std::size_t n = batch.shape()[0];

    // Per-sample conv stack, then stacked rows through the dense tail.
    std::size_t flatten_at = 0;
    std::vector<Var> rows;
    rows.reserve(n);
    for (std::size_t si = 0; si < n; ++si) {
        std::vector<double> pix(batch.values().begin() + si * h * w,
                                batch.values().begin() + (si + 1) * h * w);
        std::vector<Var> maps{g.leaf(Tensor({h, w}, std::move(pix)))};
        std::size_t li = 0;
        for (; li < spec.layers.size(); ++li) {
            const LayerSpec& l = spec.layers[li];
            if (l.kind == LayerSpec::Kind::Flatten) break;
            switch (l.kind) {
                case LayerSpec::Kind::Conv: {
                    std::vector<Var> next;
                    for (std::size_t c = 0; c < l.channels; ++c) {
                        Var m = g.conv2d_valid(maps[0], nv.layers[li][c]);
                        next.push_back(g.add_scalar_var(m, nv.layers[li][l.channels + c]));
                    }
                    maps = std::move(next);
                    break;
                }
                case LayerSpec::Kind::Relu:
                    for (Var& m : maps) m = g.relu(m);
                    break;
                case LayerSpec::Kind::MaxPool2:
                    for (Var& m : maps) m = g.maxpool2(m);
                    break;
                default:
                    throw ConfigError("dense layer before flatten in image mode");
            }
        }
        flatten_at = li;
        std::vector<Var> flat;
        flat.reserve(maps.size());
        for (Var m : maps) flat.push_back(g.reshape(m, {1, g.value(m).numel()}));
        Var row = flat.size() == 1 ? flat[0] : g.concat_rows(flat);
        rows.push_back(g.reshape(row, {1, g.value(row).numel()}));
    }
    Var x = rows.size() == 1 ? rows[0] : g.concat_rows(rows);
    Var features{};
    Var scores = detail::forward_flat(g, nv, x, flatten_at + 1, &features);
    return {features, scores};
}

// ---- checkpoint serialization -------------------------------------------

inline nlohmann::json layer_spec_to_json(const LayerSpec& l) {
    switch (l.kind) {
        case LayerSpec::Kind::Dense: return {{"kind", "dense"}, {"out", l.out_dim}};
        case LayerSpec::Kind::Conv: return {{"kind", "conv"}, {"k", l.ksize}, {"channels", l.channels}};
        case LayerSpec::Kind::MaxPool2: return {{"kind", "maxpool2"}};
        case LayerSpec::Kind::Relu: return {{"kind", "relu"}};
        case LayerSpec::Kind::Flatten: return {{"kind", "flatten"}};
    }
    throw ConfigError("unknown layer kind");
}

inline LayerSpec layer_spec_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "dense") return LayerSpec::dense(j.at("out").get<std::size_t>());
    if (kind == "conv")
        return LayerSpec::conv(j.at("k").get<std::size_t>(), j.at("channels").get<std::size_t>());
    if (kind == "maxpool2") return LayerSpec::maxpool2();
    if (kind == "relu") return LayerSpec::relu();
    if (kind == "flatten") return LayerSpec::flatten();
    throw DataError("unknown layer kind '" + kind + "' in checkpoint");
}

inline nlohmann::json tensor_to_json(const Tensor& t) {
    return {{"shape", t.shape()}, {"data", t.values()}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
    return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                  j.at("data").get<std::vector<double>>());
}

inline nlohmann::json network_to_json(const NetworkParams& p) {
    nlohmann::json spec_j;
    spec_j["input_shape"] = p.spec.input_shape;
    spec_j["layers"] = nlohmann::json::array();
    for (const auto& l : p.spec.layers) spec_j["layers"].push_back(layer_spec_to_json(l));
    nlohmann::json layers_j = nlohmann::json::array();
    for (const auto& l : p.layers) {
        nlohmann::json tensors = nlohmann::json::array();
        for (const auto& t : l.tensors) tensors.push_back(tensor_to_json(t));
        layers_j.push_back({{"tensors", tensors}});
    }
    return {{"spec", spec_j}, {"params", layers_j}};
}

inline NetworkParams network_from_json(const nlohmann::json& j) {
    NetworkParams p;
    const auto& spec_j = j.at("spec");
    p.spec.input_shape = spec_j.at("input_shape").get<std::vector<std::size_t>>();
    for (const auto& lj : spec_j.at("layers")) p.spec.layers.push_back(layer_spec_from_json(lj));
    validate_spec(p.spec);
    for (const auto& lj : j.at("params")) {
        LayerParams lp;
        for (const auto& tj : lj.at("tensors")) lp.tensors.push_back(tensor_from_json(tj));
        p.layers.push_back(std::move(lp));
    }
    if (p.layers.size() != p.spec.layers.size())
        throw DataError("checkpoint param count does not match spec layer count");
    return p;
}

}  // namespace ddstn
