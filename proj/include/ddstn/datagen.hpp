#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace ddstn {

enum class DataMode { Vector, Image };

constexpr std::size_t kImageSide = 12;

struct GenConfig {
    std::size_t n_paired = 106;
    std::size_t n_unpaired = 159;
    std::size_t dim_s = 8;
    std::size_t dim_t = 8;
    double separation_s = 1.6;
    double separation_t = 0.8;
    double noise_s = 0.6;
    double noise_t = 1.0;
    double cross_corr = 0.7;
    DataMode mode = DataMode::Vector;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_paired < 1 || n_unpaired < 1) throw ConfigError("counts must be >= 1");
        if (dim_s < 1 || dim_t < 1) throw ConfigError("dims must be >= 1");
        if (noise_s <= 0 || noise_t <= 0) throw ConfigError("noise must be > 0");
        if (separation_s < 0 || separation_t < 0) throw ConfigError("separation must be >= 0");
        if (cross_corr < 0 || cross_corr > 1) throw ConfigError("cross_corr must be in [0, 1]");
    }
};

struct PairedRecord {
    std::size_t id;
    std::vector<double> x_s;
    std::vector<double> x_t;
    int label;  // -1 or +1
};

struct UnpairedRecord {
    std::size_t id;
    std::vector<double> x_t;
    int label;
};

struct BimodalDataset {
    std::vector<PairedRecord> paired;
    std::vector<UnpairedRecord> unpaired;
    DataMode mode = DataMode::Vector;
    std::size_t dim_s = 0;
    std::size_t dim_t = 0;

    /// Network input shape for the target/source channels.
    std::vector<std::size_t> input_shape_t() const {
        return mode == DataMode::Image ? std::vector<std::size_t>{kImageSide, kImageSide}
                                       : std::vector<std::size_t>{dim_t};
    }
    std::vector<std::size_t> input_shape_s() const {
        return mode == DataMode::Image ? std::vector<std::size_t>{kImageSide, kImageSide}
                                       : std::vector<std::size_t>{dim_s};
    }

    /// Stacks flat feature rows into a batch tensor matching the mode.
    Tensor stack(const std::vector<const std::vector<double>*>& rows, std::size_t dim) const {
        std::vector<double> data;
        data.reserve(rows.size() * dim);
        for (const auto* r : rows) data.insert(data.end(), r->begin(), r->end());
        if (mode == DataMode::Image)
            return Tensor({rows.size(), kImageSide, kImageSide}, std::move(data));
        return Tensor({rows.size(), dim}, std::move(data));
    }
};

struct FoldPlan {
    std::size_t k = 0;
    std::vector<std::vector<std::size_t>> test_ids;  // per fold, sorted
};

namespace detail {

inline double uniform01_open(std::mt19937_64& rng) {
    return (double(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

// Box-Muller, engine-stable across standard libraries.
inline double std_normal(std::mt19937_64& rng) {
    const double u1 = uniform01_open(rng);
    const double u2 = uniform01_open(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline std::vector<double> unit_direction(std::size_t dim, std::mt19937_64& rng) {
    std::vector<double> v(dim);
    double norm = 0.0;
    for (double& x : v) {
        x = std_normal(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        v[0] = 1.0;
        norm = 1.0;
    }
    for (double& x : v) x /= norm;
    return v;
}

inline std::vector<int> balanced_labels(std::size_t n, std::mt19937_64& rng) {
    std::vector<int> labels(n);
    // odd counts give the extra sample to the negative (benign) class,
    // matching the clinical prevalence the counts are modeled on
    for (std::size_t i = 0; i < n; ++i) labels[i] = i < n / 2 ? 1 : -1;
    std::shuffle(labels.begin(), labels.end(), rng);
    return labels;
}

// Centered blob; radius carries the class signal, pixels carry the noise.
inline std::vector<double> render_image(int label, double separation, double noise,
                                        double coupled, std::mt19937_64& rng) {
    const double radius = 3.0 + 0.8 * label * separation + 0.5 * coupled;
    const double c = (double(kImageSide) - 1.0) / 2.0;
    std::vector<double> img(kImageSide * kImageSide);
    for (std::size_t i = 0; i < kImageSide; ++i)
        for (std::size_t j = 0; j < kImageSide; ++j) {
            const double d = std::sqrt((double(i) - c) * (double(i) - c) +
                                       (double(j) - c) * (double(j) - c));
            img[i * kImageSide + j] =
                1.0 / (1.0 + std::exp(2.0 * (d - radius))) + noise * 0.25 * std_normal(rng);
        }
    return img;
}

}  // namespace detail

/// Deterministic synthetic bimodal data. A shared latent couples the two
/// modalities of a paired record; per-modality separation and noise control
/// how informative each channel is.
inline BimodalDataset generate_synthetic(const GenConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    BimodalDataset ds;
    ds.mode = cfg.mode;
    const bool image = cfg.mode == DataMode::Image;
    ds.dim_s = image ? kImageSide * kImageSide : cfg.dim_s;
    ds.dim_t = image ? kImageSide * kImageSide : cfg.dim_t;

    const std::size_t dim_s = cfg.dim_s, dim_t = cfg.dim_t;
    const std::vector<double> mu_s = detail::unit_direction(dim_s, rng);
    const std::vector<double> mu_t = detail::unit_direction(dim_t, rng);
    const std::vector<int> labels_p = detail::balanced_labels(cfg.n_paired, rng);
    const std::vector<int> labels_u = detail::balanced_labels(cfg.n_unpaired, rng);
    const double cc = cfg.cross_corr;
    const double cc_rest = std::sqrt(1.0 - cc * cc);
    const std::size_t latent_dim = std::max(dim_s, dim_t);

    for (std::size_t i = 0; i < cfg.n_paired; ++i) {
        const int y = labels_p[i];
        std::vector<double> u(latent_dim);
        for (double& v : u) v = detail::std_normal(rng);
        PairedRecord rec;
        rec.id = i;
        rec.label = y;
        if (image) {
            rec.x_s = detail::render_image(y, cfg.separation_s, cfg.noise_s,
                                           cc * u[0] + cc_rest * detail::std_normal(rng), rng);
            rec.x_t = detail::render_image(y, cfg.separation_t, cfg.noise_t,
                                           cc * u[0] + cc_rest * detail::std_normal(rng), rng);
        } else {
            rec.x_s.resize(dim_s);
            for (std::size_t j = 0; j < dim_s; ++j)
                rec.x_s[j] = y * cfg.separation_s * mu_s[j] +
                             cfg.noise_s * (cc * u[j] + cc_rest * detail::std_normal(rng));
            rec.x_t.resize(dim_t);
            for (std::size_t j = 0; j < dim_t; ++j)
                rec.x_t[j] = y * cfg.separation_t * mu_t[j] +
                             cfg.noise_t * (cc * u[j] + cc_rest * detail::std_normal(rng));
        }
        ds.paired.push_back(std::move(rec));
    }
    for (std::size_t i = 0; i < cfg.n_unpaired; ++i) {
        const int y = labels_u[i];
        UnpairedRecord rec;
        rec.id = cfg.n_paired + i;
        rec.label = y;
        if (image) {
            rec.x_t = detail::render_image(y, cfg.separation_t, cfg.noise_t,
                                           detail::std_normal(rng), rng);
        } else {
            rec.x_t.resize(dim_t);
            for (std::size_t j = 0; j < dim_t; ++j)
                rec.x_t[j] = y * cfg.separation_t * mu_t[j] + cfg.noise_t * detail::std_normal(rng);
        }
        ds.unpaired.push_back(std::move(rec));
    }
    return ds;
}

/// Stratified k-fold split of the unpaired ids. Paired ids are always
/// training data and never enter a test fold.
inline FoldPlan make_fold_plan(const BimodalDataset& ds, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("fold count must be >= 2");
    if (k > ds.unpaired.size())
        throw ConfigError("fold count " + std::to_string(k) + " exceeds unpaired count " +
                          std::to_string(ds.unpaired.size()));
    std::vector<std::size_t> pos, neg;
    for (const auto& r : ds.unpaired) (r.label > 0 ? pos : neg).push_back(r.id);
    std::mt19937_64 rng(seed);
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);

    FoldPlan plan;
    plan.k = k;
    plan.test_ids.assign(k, {});
    std::vector<std::size_t> load(k, 0);
    for (const auto* cls : {&pos, &neg}) {
        // deal round-robin starting from the lightest fold so sizes stay even
        std::size_t start = 0;
        for (std::size_t f = 1; f < k; ++f)
            if (load[f] < load[start]) start = f;
        for (std::size_t i = 0; i < cls->size(); ++i) {
            const std::size_t f = (start + i) % k;
            plan.test_ids[f].push_back((*cls)[i]);
            ++load[f];
        }
    }
    for (auto& fold : plan.test_ids) std::sort(fold.begin(), fold.end());
    return plan;
}

namespace detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

/// CSV layout: id,kind,label,s0..s{dim_s-1},t0..t{dim_t-1}
/// Unpaired rows leave the s-columns empty. 17 significant digits.
inline void save_csv(const BimodalDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "id,kind,label";
    for (std::size_t j = 0; j < ds.dim_s; ++j) out << ",s" << j;
    for (std::size_t j = 0; j < ds.dim_t; ++j) out << ",t" << j;
    out << "\n";
    for (const auto& r : ds.paired) {
        out << r.id << ",paired," << r.label;
        for (double v : r.x_s) out << "," << detail::fmt17(v);
        for (double v : r.x_t) out << "," << detail::fmt17(v);
        out << "\n";
    }
    for (const auto& r : ds.unpaired) {
        out << r.id << ",unpaired," << r.label;
        for (std::size_t j = 0; j < ds.dim_s; ++j) out << ",";
        for (double v : r.x_t) out << "," << detail::fmt17(v);
        out << "\n";
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline BimodalDataset load_csv(const std::string& path, DataMode mode = DataMode::Vector) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty dataset file '" + path + "'");
    const auto header = detail::split_csv_line(line);
    if (header.size() < 4 || header[0] != "id" || header[1] != "kind" || header[2] != "label")
        throw DataError("bad header in '" + path + "'");
    std::size_t dim_s = 0, dim_t = 0;
    for (std::size_t i = 3; i < header.size(); ++i) {
        if (header[i] == "s" + std::to_string(dim_s)) ++dim_s;
        else if (header[i] == "t" + std::to_string(dim_t)) ++dim_t;
        else throw DataError("unexpected column '" + header[i] + "' in '" + path + "'");
    }
    if (dim_t == 0) throw DataError("no target feature columns in '" + path + "'");
    if (mode == DataMode::Image && (dim_t != kImageSide * kImageSide ||
                                    (dim_s != 0 && dim_s != kImageSide * kImageSide)))
        throw DataError("image mode requires " + std::to_string(kImageSide * kImageSide) +
                        " feature columns");

    BimodalDataset ds;
    ds.mode = mode;
    ds.dim_s = dim_s;
    ds.dim_t = dim_t;
    std::vector<std::size_t> seen_ids;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        const std::string where = "row " + std::to_string(row);
        if (f.size() != 3 + dim_s + dim_t)
            throw DataError(where + ": expected " + std::to_string(3 + dim_s + dim_t) +
                            " columns, got " + std::to_string(f.size()));
        std::size_t id;
        try {
            id = std::stoull(f[0]);
        } catch (...) {
            throw DataError(where + ": bad id '" + f[0] + "'");
        }
        seen_ids.push_back(id);
        const std::string& kind = f[1];
        int label;
        if (f[2] == "1" || f[2] == "+1") label = 1;
        else if (f[2] == "-1") label = -1;
        else throw DataError(where + ": label '" + f[2] + "' not in {-1,+1}");

        auto parse_block = [&](std::size_t off, std::size_t dim) {
            std::vector<double> vals(dim);
            for (std::size_t j = 0; j < dim; ++j) {
                if (f[off + j].empty()) throw DataError(where + ": missing feature value");
                try {
                    vals[j] = std::stod(f[off + j]);
                } catch (...) {
                    throw DataError(where + ": bad number '" + f[off + j] + "'");
                }
            }
            return vals;
        };
        if (kind == "paired") {
            if (dim_s == 0) throw DataError(where + ": paired row but file has no source columns");
            PairedRecord rec;
            rec.id = id;
            rec.label = label;
            rec.x_s = parse_block(3, dim_s);
            rec.x_t = parse_block(3 + dim_s, dim_t);
            ds.paired.push_back(std::move(rec));
        } else if (kind == "unpaired") {
            for (std::size_t j = 0; j < dim_s; ++j)
                if (!f[3 + j].empty())
                    throw DataError(where + ": unpaired row carries source features");
            UnpairedRecord rec;
            rec.id = id;
            rec.label = label;
            rec.x_t = parse_block(3 + dim_s, dim_t);
            ds.unpaired.push_back(std::move(rec));
        } else {
            throw DataError(where + ": kind '" + kind + "' not in {paired, unpaired}");
        }
    }
    std::sort(seen_ids.begin(), seen_ids.end());
    for (std::size_t i = 1; i < seen_ids.size(); ++i)
        if (seen_ids[i] == seen_ids[i - 1])
            throw DataError("duplicate id " + std::to_string(seen_ids[i]) + " in '" + path + "'");
    return ds;
}

}  // namespace ddstn
