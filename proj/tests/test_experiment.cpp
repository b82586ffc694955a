#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "ddstn/experiment.hpp"
#include "doctest.h"

using namespace ddstn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExperimentConfig small_experiment(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.gen.n_paired = 14;
    cfg.gen.n_unpaired = 24;
    cfg.gen.dim_s = 4;
    cfg.gen.dim_t = 4;
    cfg.gen.seed = 2;
    cfg.algorithms = {Algorithm::Ddstn, Algorithm::CnnSvm};
    cfg.train.epochs = 3;
    cfg.train.feature_dim = 8;
    cfg.folds = 2;
    cfg.seeds = {0, 1};
    cfg.out_dir = out_dir;
    return cfg;
}

}  // namespace

TEST_CASE("experiment config json: defaults, round-trip and validation") {
    ExperimentConfig cfg = experiment_config_from_json(nlohmann::json::object());
    CHECK(cfg.algorithms.size() == 6);  // all algorithms when unspecified
    CHECK(cfg.folds == 3);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{0});
    CHECK(cfg.generate);

    nlohmann::json j = {
        {"dataset", {{"generate", {{"n_paired", 20}, {"n_unpaired", 30}, {"seed", 5}}}}},
        {"algorithms", {"ddstn", "deep_coral"}},
        {"train", {{"epochs", 7}, {"optimizer", {{"method", "sgd"}, {"lr", 0.05}}}}},
        {"folds", 4},
        {"seeds", {3, 4}},
        {"out", "results"}};
    cfg = experiment_config_from_json(j);
    CHECK(cfg.gen.n_paired == 20);
    CHECK(cfg.algorithms == std::vector<Algorithm>{Algorithm::Ddstn, Algorithm::DeepCoral});
    CHECK(cfg.train.epochs == 7);
    CHECK(cfg.train.optimizer.method == OptimizerConfig::Method::Sgd);
    CHECK(cfg.train.optimizer.lr == 0.05);
    CHECK(cfg.folds == 4);
    CHECK(cfg.out_dir == "results");

    // round-trip through text
    ExperimentConfig back =
        experiment_config_from_json(nlohmann::json::parse(experiment_config_to_json(cfg).dump()));
    CHECK(experiment_config_to_json(back) == experiment_config_to_json(cfg));
}

TEST_CASE("experiment config json rejects bad values") {
    CHECK_THROWS_AS(experiment_config_from_json({{"algorithms", {"svm_from_mars"}}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"folds", 1}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"seeds", nlohmann::json::array()}}),
                    ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json(
                        {{"dataset", {{"generate", {{"n_paired", 10}, {"n_pared", 10}}}}}}),
                    ConfigError);  // misspelled generate field
    CHECK_THROWS_AS(experiment_config_from_json({{"dataset", nlohmann::json::object()}}),
                    ConfigError);
    CHECK_THROWS_AS(
        experiment_config_from_json({{"train", {{"hyperparams", {{"rho", -1.0}}}}}}),
        ConfigError);
}

TEST_CASE("checkpoint round-trip reproduces predictions exactly") {
    GenConfig gcfg;
    gcfg.n_paired = 12;
    gcfg.n_unpaired = 20;
    gcfg.dim_s = 4;
    gcfg.dim_t = 4;
    gcfg.seed = 8;
    BimodalDataset ds = generate_synthetic(gcfg);
    TrainConfig tc;
    tc.epochs = 4;
    tc.feature_dim = 8;
    TrainedModel m =
        train_ddstn(ds, default_vector_spec(4, 8), default_vector_spec(4, 8), tc);

    const fs::path path = fs::temp_directory_path() / "ddstn_ckpt.json";
    save_checkpoint(m, path.string());
    TrainedModel back = load_checkpoint(path.string());
    fs::remove(path);

    CHECK(back.algorithm == m.algorithm);
    CHECK(back.loss_history == m.loss_history);
    std::vector<const std::vector<double>*> rows;
    for (const auto& r : ds.unpaired) rows.push_back(&r.x_t);
    const Tensor batch = ds.stack(rows, ds.dim_t);
    Prediction a = predict(m, batch);
    Prediction b = predict(back, batch);
    CHECK(a.scores == b.scores);  // bit-exact through the 17-digit round-trip
    CHECK(a.labels == b.labels);
}

TEST_CASE("checkpoint keeps an absent source channel absent") {
    GenConfig gcfg;
    gcfg.n_paired = 10;
    gcfg.n_unpaired = 16;
    gcfg.dim_s = 3;
    gcfg.dim_t = 3;
    BimodalDataset ds = generate_synthetic(gcfg);
    TrainConfig tc;
    tc.epochs = 2;
    tc.feature_dim = 4;
    TrainedModel m = train_baseline(Algorithm::CnnSvm, ds, default_vector_spec(3, 4),
                                    default_vector_spec(3, 4), tc);
    CHECK(m.source.empty());
    const fs::path path = fs::temp_directory_path() / "ddstn_ckpt_nosrc.json";
    save_checkpoint(m, path.string());
    TrainedModel back = load_checkpoint(path.string());
    fs::remove(path);
    CHECK(back.source.empty());
}

TEST_CASE("compare: summary covers every algorithm and manifest records the protocol") {
    const fs::path dir = fs::temp_directory_path() / "ddstn_cmp";
    ExperimentConfig cfg = small_experiment(dir.string());
    BimodalDataset ds = generate_synthetic(cfg.gen);
    CompareResult res = run_compare(cfg, ds);

    REQUIRE(res.summaries.size() == 2);
    CHECK(res.summaries[0].algorithm == Algorithm::Ddstn);
    CHECK(res.summaries[1].algorithm == Algorithm::CnnSvm);
    for (const auto& s : res.summaries) {
        CHECK(s.per_seed.size() == 2);
        for (const auto& rep : s.per_seed) CHECK(rep.folds.size() == 2);
        CHECK(s.pooled_auc >= 0.0);
        CHECK(s.pooled_auc <= 1.0);
    }

    const auto& runs = res.manifest.at("runs");
    REQUIRE(runs.size() == 4);  // 2 algorithms x 2 seeds
    std::set<std::size_t> paired_ids, unpaired_ids;
    for (const auto& r : ds.paired) paired_ids.insert(r.id);
    for (const auto& r : ds.unpaired) unpaired_ids.insert(r.id);
    for (const auto& run : runs) {
        std::set<std::size_t> seen;
        for (const auto& fold : run.at("folds")) {
            for (std::size_t id : fold.at("test_ids").get<std::vector<std::size_t>>()) {
                CHECK(!paired_ids.contains(id));  // paired data never under test
                CHECK(seen.insert(id).second);
            }
        }
        CHECK(seen == unpaired_ids);  // test folds partition the unpaired ids
    }
    CHECK(res.manifest.at("config").at("folds") == 2);
    CHECK(res.manifest.at("seeds").get<std::vector<std::uint64_t>>() ==
          std::vector<std::uint64_t>{0, 1});
}

TEST_CASE("compare output files are byte-identical across reruns") {
    const fs::path dir_a = fs::temp_directory_path() / "ddstn_cmp_a";
    const fs::path dir_b = fs::temp_directory_path() / "ddstn_cmp_b";
    ExperimentConfig cfg_a = small_experiment(dir_a.string());
    ExperimentConfig cfg_b = small_experiment(dir_b.string());
    run_compare_to_dir(cfg_a);
    run_compare_to_dir(cfg_b);

    for (const char* name :
         {"table1.csv", "roc_ddstn.csv", "roc_cnn_svm.csv", "roc.svg"}) {
        CHECK(slurp(dir_a / name) == slurp(dir_b / name));
    }
    // manifests differ only in the out dir they echo; compare with that erased
    nlohmann::json ma = nlohmann::json::parse(slurp(dir_a / "manifest.json"));
    nlohmann::json mb = nlohmann::json::parse(slurp(dir_b / "manifest.json"));
    ma["config"]["out"] = "";
    mb["config"]["out"] = "";
    CHECK(ma == mb);

    // table has one row per algorithm plus the header
    std::string table = slurp(dir_a / "table1.csv");
    CHECK(std::count(table.begin(), table.end(), '\n') == 3);
    CHECK(table.rfind("algorithm,acc,sen,spe,yi\n", 0) == 0);

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}
