// Command-line runner: synthetic data generation, single-algorithm training
// and evaluation, and the full cross-validated algorithm comparison.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ddstn/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ddstn::IoError("cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ddstn::ConfigError("bad JSON in '" + path + "': " + e.what());
    }
    return j;
}

ddstn::ExperimentConfig load_experiment_config(const std::string& config_path,
                                               const std::optional<std::string>& out_override,
                                               const std::optional<std::uint64_t>& seed_override) {
    json j = config_path.empty() ? json::object() : load_json_file(config_path);
    ddstn::ExperimentConfig cfg = ddstn::experiment_config_from_json(j);
    if (out_override) cfg.out_dir = *out_override;
    if (seed_override) {
        cfg.seeds = {*seed_override};
        cfg.gen.seed = *seed_override;
    }
    return cfg;
}

ddstn::BimodalDataset load_dataset(const ddstn::ExperimentConfig& cfg) {
    return cfg.generate ? ddstn::generate_synthetic(cfg.gen)
                        : ddstn::load_csv(cfg.csv_path, cfg.csv_mode);
}

int cmd_generate(const ddstn::ExperimentConfig& cfg, const std::string& out_file) {
    ddstn::BimodalDataset ds = ddstn::generate_synthetic(cfg.gen);
    ddstn::save_csv(ds, out_file);
    std::printf("wrote %s: %zu paired, %zu unpaired (dim_s=%zu, dim_t=%zu)\n", out_file.c_str(),
                ds.paired.size(), ds.unpaired.size(), ds.dim_s, ds.dim_t);
    return 0;
}

int cmd_train(const ddstn::ExperimentConfig& cfg) {
    ddstn::BimodalDataset ds = load_dataset(cfg);
    const ddstn::Algorithm algo = cfg.algorithms.front();
    ddstn::TrainConfig tc = cfg.train;
    if (tc.seed == 0 && !cfg.seeds.empty()) tc.seed = cfg.seeds.front();
    ddstn::TrainedModel model =
        ddstn::train(algo, ds, ddstn::channel_spec(ds, true, tc.feature_dim),
                     ddstn::channel_spec(ds, false, tc.feature_dim), tc);
    fs::create_directories(cfg.out_dir);
    const std::string ckpt = (fs::path(cfg.out_dir) / "checkpoint.json").string();
    ddstn::save_checkpoint(model, ckpt);
    ddstn::save_history_csv(model, (fs::path(cfg.out_dir) / "history.csv").string());
    std::printf("trained %s for %zu epochs, checkpoint at %s\n",
                ddstn::algorithm_name(algo).c_str(), tc.epochs, ckpt.c_str());
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& out_dir) {
    ddstn::TrainedModel model = ddstn::load_checkpoint(checkpoint_path);
    const ddstn::DataMode mode =
        model.target.spec.image_mode() ? ddstn::DataMode::Image : ddstn::DataMode::Vector;
    ddstn::BimodalDataset ds = ddstn::load_csv(data_path, mode);

    std::vector<const std::vector<double>*> rows;
    std::vector<int> truth;
    for (const auto& r : ds.paired) {
        rows.push_back(&r.x_t);
        truth.push_back(r.label);
    }
    for (const auto& r : ds.unpaired) {
        rows.push_back(&r.x_t);
        truth.push_back(r.label);
    }
    if (rows.empty()) throw ddstn::DataError("dataset '" + data_path + "' has no rows");
    if (!model.target.spec.image_mode() && ds.dim_t != model.target.spec.input_shape[0])
        throw ddstn::DimensionError("checkpoint expects input dim " +
                                    std::to_string(model.target.spec.input_shape[0]) +
                                    " but dataset has dim_t " + std::to_string(ds.dim_t));

    ddstn::Prediction pred = ddstn::predict(model, ds.stack(rows, ds.dim_t));
    ddstn::Metrics m = ddstn::metrics(pred.labels, truth);
    ddstn::RocResult roc = ddstn::roc_auc(pred.scores, truth);

    json report = {{"metrics", ddstn::metrics_to_json(m)},
                   {"auc", roc.auc},
                   {"n", truth.size()},
                   {"checkpoint", checkpoint_path},
                   {"data", data_path}};
    fs::create_directories(out_dir);
    const std::string report_path = (fs::path(out_dir) / "eval_report.json").string();
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw ddstn::IoError("cannot write '" + report_path + "'");
    out << report.dump(2) << "\n";
    ddstn::save_roc_csv(roc, (fs::path(out_dir) / "roc.csv").string());
    std::printf("acc=%.4f sen=%.4f spe=%.4f yi=%.4f auc=%.4f (%zu samples)\n", m.acc, m.sen,
                m.spe, m.yi, roc.auc, truth.size());
    return 0;
}

int cmd_compare(const ddstn::ExperimentConfig& cfg) {
    ddstn::CompareResult result = ddstn::run_compare_to_dir(cfg);
    std::printf("%-14s %-14s %-14s %-14s %-14s %s\n", "algorithm", "acc", "sen", "spe", "yi",
                "auc");
    for (const auto& s : result.summaries) {
        std::printf("%-14s %-14s %-14s %-14s %-14s %.3f\n",
                    ddstn::algorithm_name(s.algorithm).c_str(),
                    ddstn::detail::pct_pm(s.mean.acc, s.sd.acc).c_str(),
                    ddstn::detail::pct_pm(s.mean.sen, s.sd.sen).c_str(),
                    ddstn::detail::pct_pm(s.mean.spe, s.sd.spe).c_str(),
                    ddstn::detail::pct_pm(s.mean.yi, s.sd.yi).c_str(), s.pooled_auc);
    }
    std::printf("reports written to %s\n", cfg.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DDSTN: doubly supervised transfer learning experiments"};
    app.require_subcommand(1);

    std::string config_path, out_path, checkpoint_path, data_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON experiment config");
        sub->add_option_function<std::string>(
            "--out", [&](const std::string& v) { out_override = v; }, "output directory/file");
        sub->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t v) { seed_override = v; }, "seed override");
    };

    CLI::App* gen = app.add_subcommand("generate", "generate a synthetic bimodal dataset CSV");
    add_common(gen);
    CLI::App* train = app.add_subcommand("train", "train one algorithm to a checkpoint");
    add_common(train);
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset CSV");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
    eval_cmd->add_option("--data", data_path, "dataset CSV")->required();
    eval_cmd->add_option_function<std::string>(
        "--out", [&](const std::string& v) { out_override = v; }, "output directory");
    CLI::App* compare = app.add_subcommand("compare", "full cross-validated comparison");
    add_common(compare);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            ddstn::ExperimentConfig cfg = load_experiment_config(config_path, {}, seed_override);
            return cmd_generate(cfg, out_override.value_or("dataset.csv"));
        }
        if (train->parsed()) {
            ddstn::ExperimentConfig cfg =
                load_experiment_config(config_path, out_override, seed_override);
            return cmd_train(cfg);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(checkpoint_path, data_path, out_override.value_or("."));
        }
        if (compare->parsed()) {
            ddstn::ExperimentConfig cfg =
                load_experiment_config(config_path, out_override, seed_override);
            return cmd_compare(cfg);
        }
    } catch (const ddstn::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ddstn::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
