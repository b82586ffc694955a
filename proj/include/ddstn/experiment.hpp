#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "eval.hpp"
#include "json.hpp"
#include "train.hpp"

namespace ddstn {

// ---- config (de)serialization ---------------------------------------------

inline nlohmann::json gen_config_to_json(const GenConfig& c) {
    return {{"n_paired", c.n_paired},
            {"n_unpaired", c.n_unpaired},
            {"dim_s", c.dim_s},
            {"dim_t", c.dim_t},
            {"separation_s", c.separation_s},
            {"separation_t", c.separation_t},
            {"noise_s", c.noise_s},
            {"noise_t", c.noise_t},
            {"cross_corr", c.cross_corr},
            {"mode", c.mode == DataMode::Image ? "image" : "vector"},
            {"seed", c.seed}};
}

inline GenConfig gen_config_from_json(const nlohmann::json& j) {
    GenConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n_paired", c.n_paired);
    get("n_unpaired", c.n_unpaired);
    get("dim_s", c.dim_s);
    get("dim_t", c.dim_t);
    get("separation_s", c.separation_s);
    get("separation_t", c.separation_t);
    get("noise_s", c.noise_s);
    get("noise_t", c.noise_t);
    get("cross_corr", c.cross_corr);
    get("seed", c.seed);
    if (j.contains("mode")) {
        const std::string m = j.at("mode").get<std::string>();
        if (m == "vector") c.mode = DataMode::Vector;
        else if (m == "image") c.mode = DataMode::Image;
        else throw ConfigError("dataset.generate.mode must be 'vector' or 'image'");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::vector<std::string> known = {
            "n_paired", "n_unpaired", "dim_s", "dim_t", "separation_s", "separation_t",
            "noise_s", "noise_t", "cross_corr", "mode", "seed"};
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("unknown generate field '" + it.key() + "'");
    }
    c.validate();
    return c;
}

inline nlohmann::json hyperparams_to_json(const Hyperparams& h) {
    return {{"C1", h.C1},
            {"C2", h.C2},
            {"lambda1", h.lambda1},
            {"lambda2", h.lambda2},
            {"rho", h.rho},
            {"mmd_kernel", h.mmd_kernel == MmdKernel::Rbf ? "rbf" : "linear"},
            {"rbf_bandwidths", h.rbf_bandwidths},
            {"include_paired_target", h.include_paired_target}};
}

inline Hyperparams hyperparams_from_json(const nlohmann::json& j) {
    Hyperparams h;
    if (j.contains("C1")) h.C1 = j.at("C1").get<double>();
    if (j.contains("C2")) h.C2 = j.at("C2").get<double>();
    if (j.contains("lambda1")) h.lambda1 = j.at("lambda1").get<double>();
    if (j.contains("lambda2")) h.lambda2 = j.at("lambda2").get<double>();
    if (j.contains("rho")) h.rho = j.at("rho").get<double>();
    if (j.contains("rbf_bandwidths"))
        h.rbf_bandwidths = j.at("rbf_bandwidths").get<std::vector<double>>();
    if (j.contains("include_paired_target"))
        h.include_paired_target = j.at("include_paired_target").get<bool>();
    if (j.contains("mmd_kernel")) {
        const std::string k = j.at("mmd_kernel").get<std::string>();
        if (k == "linear") h.mmd_kernel = MmdKernel::Linear;
        else if (k == "rbf") h.mmd_kernel = MmdKernel::Rbf;
        else throw ConfigError("hyperparams.mmd_kernel must be 'linear' or 'rbf'");
    }
    h.validate();
    return h;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"paired_batch_size", c.paired_batch_size},
            {"unpaired_batch_size", c.unpaired_batch_size},
            {"optimizer",
             {{"method", c.optimizer.method == OptimizerConfig::Method::Sgd ? "sgd" : "adam"},
              {"lr", c.optimizer.lr},
              {"beta1", c.optimizer.beta1},
              {"beta2", c.optimizer.beta2},
              {"eps", c.optimizer.eps}}},
            {"hyperparams", hyperparams_to_json(c.hp)},
            {"coupling", c.coupling == CouplingMode::Symmetric ? "symmetric" : "epoch_alternate"},
            {"feature_dim", c.feature_dim},
            {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("paired_batch_size"))
        c.paired_batch_size = j.at("paired_batch_size").get<std::size_t>();
    if (j.contains("unpaired_batch_size"))
        c.unpaired_batch_size = j.at("unpaired_batch_size").get<std::size_t>();
    if (j.contains("feature_dim")) c.feature_dim = j.at("feature_dim").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        if (o.contains("method")) {
            const std::string m = o.at("method").get<std::string>();
            if (m == "sgd") c.optimizer.method = OptimizerConfig::Method::Sgd;
            else if (m == "adam") c.optimizer.method = OptimizerConfig::Method::Adam;
            else throw ConfigError("optimizer.method must be 'sgd' or 'adam'");
        }
        if (o.contains("lr")) c.optimizer.lr = o.at("lr").get<double>();
        if (o.contains("beta1")) c.optimizer.beta1 = o.at("beta1").get<double>();
        if (o.contains("beta2")) c.optimizer.beta2 = o.at("beta2").get<double>();
        if (o.contains("eps")) c.optimizer.eps = o.at("eps").get<double>();
    }
    if (j.contains("hyperparams")) c.hp = hyperparams_from_json(j.at("hyperparams"));
    if (j.contains("coupling")) {
        const std::string m = j.at("coupling").get<std::string>();
        if (m == "symmetric") c.coupling = CouplingMode::Symmetric;
        else if (m == "epoch_alternate") c.coupling = CouplingMode::EpochAlternate;
        else throw ConfigError("coupling must be 'symmetric' or 'epoch_alternate'");
    }
    c.validate();
    return c;
}

struct ExperimentConfig {
    bool generate = true;
    GenConfig gen;
    std::string csv_path;
    DataMode csv_mode = DataMode::Vector;
    std::vector<Algorithm> algorithms;
    TrainConfig train;
    std::size_t folds = 3;
    std::vector<std::uint64_t> seeds = {0};
    std::string out_dir = "out";

    void validate() const {
        if (algorithms.empty()) throw ConfigError("algorithm list is empty");
        if (seeds.empty()) throw ConfigError("seed list is empty");
        if (folds < 2) throw ConfigError("folds must be >= 2");
    }
};

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
    nlohmann::json dataset;
    if (c.generate)
        dataset = {{"generate", gen_config_to_json(c.gen)}};
    else
        dataset = {{"csv", c.csv_path},
                   {"mode", c.csv_mode == DataMode::Image ? "image" : "vector"}};
    nlohmann::json algos = nlohmann::json::array();
    for (Algorithm a : c.algorithms) algos.push_back(algorithm_name(a));
    return {{"dataset", dataset},
            {"algorithms", algos},
            {"train", train_config_to_json(c.train)},
            {"folds", c.folds},
            {"seeds", c.seeds},
            {"out", c.out_dir}};
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        if (d.contains("generate")) {
            c.generate = true;
            c.gen = gen_config_from_json(d.at("generate"));
        } else if (d.contains("csv")) {
            c.generate = false;
            c.csv_path = d.at("csv").get<std::string>();
            if (d.contains("mode") && d.at("mode").get<std::string>() == "image")
                c.csv_mode = DataMode::Image;
        } else {
            throw ConfigError("dataset must contain 'generate' or 'csv'");
        }
    }
    c.algorithms.clear();
    if (j.contains("algorithms"))
        for (const auto& a : j.at("algorithms"))
            c.algorithms.push_back(algorithm_from_name(a.get<std::string>()));
    if (c.algorithms.empty())
        c.algorithms = {Algorithm::Ddstn, Algorithm::CnnSvm, Algorithm::CnnSvmPlus,
                        Algorithm::Ddc, Algorithm::Dan, Algorithm::DeepCoral};
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("folds")) c.folds = j.at("folds").get<std::size_t>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
    c.validate();
    return c;
}

// ---- model checkpoints -----------------------------------------------------

inline nlohmann::json model_to_json(const TrainedModel& m) {
    return {{"algorithm", algorithm_name(m.algorithm)},
            {"target", network_to_json(m.target)},
            {"source", m.source.empty() ? nlohmann::json() : network_to_json(m.source)},
            {"history", m.loss_history},
            {"config", train_config_to_json(m.config)},
            {"effective_hyperparams", hyperparams_to_json(m.effective_hp)}};
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
    TrainedModel m;
    m.algorithm = algorithm_from_name(j.at("algorithm").get<std::string>());
    m.target = network_from_json(j.at("target"));
    if (!j.at("source").is_null()) m.source = network_from_json(j.at("source"));
    m.loss_history = j.at("history").get<std::vector<double>>();
    m.config = train_config_from_json(j.at("config"));
    m.effective_hp = hyperparams_from_json(j.at("effective_hyperparams"));
    return m;
}

inline void save_checkpoint(const TrainedModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << model_to_json(m).dump(2) << "\n";
}

inline TrainedModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    nlohmann::json j;
    in >> j;
    return model_from_json(j);
}

// ---- compare: the Table-1-style experiment ---------------------------------

struct AlgorithmSummary {
    Algorithm algorithm;
    Metrics mean, sd;        // over all (seed x fold) cells
    double pooled_auc = 0;
    RocResult pooled_roc;
    std::vector<EvalReport> per_seed;
};

struct CompareResult {
    std::vector<AlgorithmSummary> summaries;
    nlohmann::json manifest;
};

inline NetworkSpec channel_spec(const BimodalDataset& ds, bool source, std::size_t feature_dim) {
    if (ds.mode == DataMode::Image) return default_image_spec(kImageSide, kImageSide, feature_dim);
    return default_vector_spec(source ? ds.dim_s : ds.dim_t, feature_dim);
}

inline CompareResult run_compare(const ExperimentConfig& cfg, const BimodalDataset& ds) {
    cfg.validate();
    CompareResult result;
    nlohmann::json manifest;
    manifest["config"] = experiment_config_to_json(cfg);
    manifest["seeds"] = cfg.seeds;
    nlohmann::json runs = nlohmann::json::array();

    for (Algorithm algo : cfg.algorithms) {
        AlgorithmSummary summary;
        summary.algorithm = algo;
        std::vector<double> accs, sens, spes, yis;
        std::vector<double> pooled_scores;
        std::vector<int> pooled_truth;
        for (std::uint64_t seed : cfg.seeds) {
            FoldPlan plan = make_fold_plan(ds, cfg.folds, seed);
            TrainRun run;
            run.algorithm = algo;
            run.source_spec = channel_spec(ds, true, cfg.train.feature_dim);
            run.target_spec = channel_spec(ds, false, cfg.train.feature_dim);
            run.config = cfg.train;
            run.config.seed = seed;
            EvalReport report = cross_validate(ds, plan, run);
            nlohmann::json folds_j = nlohmann::json::array();
            for (const auto& f : report.folds) {
                accs.push_back(f.m.acc);
                sens.push_back(f.m.sen);
                spes.push_back(f.m.spe);
                yis.push_back(f.m.yi);
                pooled_scores.insert(pooled_scores.end(), f.scores.begin(), f.scores.end());
                pooled_truth.insert(pooled_truth.end(), f.truth.begin(), f.truth.end());
                folds_j.push_back({{"train_ids", f.train_ids}, {"test_ids", f.test_ids}});
            }
            runs.push_back({{"algorithm", algorithm_name(algo)},
                            {"seed", seed},
                            {"folds", folds_j},
                            {"mean", metrics_to_json(report.mean)}});
            summary.per_seed.push_back(std::move(report));
        }
        detail::mean_sd(accs, summary.mean.acc, summary.sd.acc);
        detail::mean_sd(sens, summary.mean.sen, summary.sd.sen);
        detail::mean_sd(spes, summary.mean.spe, summary.sd.spe);
        detail::mean_sd(yis, summary.mean.yi, summary.sd.yi);
        summary.pooled_roc = roc_auc(pooled_scores, pooled_truth);
        summary.pooled_auc = summary.pooled_roc.auc;
        result.summaries.push_back(std::move(summary));
    }
    manifest["runs"] = runs;
    result.manifest = std::move(manifest);
    return result;
}

namespace detail {

inline std::string pct_pm(double mean, double sd) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f±%.2f", 100.0 * mean, 100.0 * sd);
    return buf;
}

}  // namespace detail

inline void write_table1_csv(const CompareResult& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "algorithm,acc,sen,spe,yi\n";
    for (const auto& s : r.summaries) {
        out << algorithm_name(s.algorithm) << "," << detail::pct_pm(s.mean.acc, s.sd.acc) << ","
            << detail::pct_pm(s.mean.sen, s.sd.sen) << "," << detail::pct_pm(s.mean.spe, s.sd.spe)
            << "," << detail::pct_pm(s.mean.yi, s.sd.yi) << "\n";
    }
}

/// Hand-rolled SVG of the pooled ROC curves with AUC annotations.
inline void write_roc_svg(const CompareResult& r, const std::string& path) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                   "#ff7f0e", "#9467bd", "#8c564b"};
    const double w = 520, h = 520, m = 60, pw = w - 2 * m, ph = h - 2 * m;
    auto px = [&](double fpr) { return m + fpr * pw; };
    auto py = [&](double tpr) { return h - m - tpr * ph; };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 10; t += 2) {
        const double f = t / 10.0;
        out << "<text x=\"" << px(f) - 8 << "\" y=\"" << h - m + 18 << "\">" << f << "</text>\n";
        out << "<text x=\"" << m - 32 << "\" y=\"" << py(f) + 4 << "\">" << f << "</text>\n";
        out << "<line x1=\"" << px(f) << "\" y1=\"" << h - m << "\" x2=\"" << px(f) << "\" y2=\""
            << h - m + 5 << "\" stroke=\"black\"/>\n";
        out << "<line x1=\"" << m - 5 << "\" y1=\"" << py(f) << "\" x2=\"" << m << "\" y2=\""
            << py(f) << "\" stroke=\"black\"/>\n";
    }
    out << "<text x=\"" << w / 2 - 60 << "\" y=\"" << h - 12
        << "\">False positive rate</text>\n";
    out << "<text x=\"16\" y=\"" << h / 2
        << "\" transform=\"rotate(-90 16 " << h / 2 << ")\">True positive rate</text>\n";
    out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\""
        << py(1) << "\" stroke=\"#aaaaaa\" stroke-dasharray=\"4 4\"/>\n";
    for (std::size_t i = 0; i < r.summaries.size(); ++i) {
        const auto& s = r.summaries[i];
        const char* color = colors[i % 6];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& p : s.pooled_roc.points) out << px(p.fpr) << "," << py(p.tpr) << " ";
        out << "\"/>\n";
        char label[96];
        std::snprintf(label, sizeof(label), "%s (AUC = %.3f)",
                      algorithm_name(s.algorithm).c_str(), s.pooled_auc);
        out << "<rect x=\"" << w - m - 210 << "\" y=\"" << h - m - 20.0 * (i + 1) - 9
            << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << w - m - 195 << "\" y=\"" << h - m - 20.0 * (i + 1) << "\">" << label
            << "</text>\n";
    }
    out << "</svg>\n";
}

/// Emits table1.csv, per-algorithm ROC CSVs, roc.svg and manifest.json.
inline CompareResult run_compare_to_dir(const ExperimentConfig& cfg) {
    BimodalDataset ds = cfg.generate ? generate_synthetic(cfg.gen)
                                     : load_csv(cfg.csv_path, cfg.csv_mode);
    CompareResult result = run_compare(cfg, ds);
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    write_table1_csv(result, (fs::path(cfg.out_dir) / "table1.csv").string());
    for (const auto& s : result.summaries)
        save_roc_csv(s.pooled_roc, (fs::path(cfg.out_dir) /
                                    ("roc_" + algorithm_name(s.algorithm) + ".csv")).string());
    write_roc_svg(result, (fs::path(cfg.out_dir) / "roc.svg").string());
    std::ofstream mout((fs::path(cfg.out_dir) / "manifest.json").string(), std::ios::binary);
    if (!mout) throw IoError("cannot write manifest.json in '" + cfg.out_dir + "'");
    mout << result.manifest.dump(2) << "\n";
    return result;
}

}  // namespace ddstn
