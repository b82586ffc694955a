#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "datagen.hpp"
#include "json.hpp"
#include "train.hpp"

namespace ddstn {

struct Prediction {
    std::vector<double> scores;
    std::vector<int> labels;  // +1 if score >= 0 else -1
};

/// Target-channel prediction; the source channel is never consulted.
inline Prediction predict(const TrainedModel& model, const Tensor& x_t) {
    Graph g;
    NetworkVars nv = bind_network(g, model.target);
    ForwardResult fr = forward(g, nv, x_t);
    const Tensor& s = g.value(fr.scores);
    Prediction p;
    p.scores.assign(s.values().begin(), s.values().end());
    for (double v : p.scores) p.labels.push_back(v >= 0.0 ? 1 : -1);
    return p;
}

struct Metrics {
    double acc = 0, sen = 0, spe = 0, yi = 0;
};

/// Positive class is +1 (malignant). yi = sen + spe - 1.
inline Metrics metrics(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size() || truth.empty())
        throw ContractError("metrics: prediction/truth size mismatch or empty");
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == 1)
            (pred[i] == 1 ? tp : fn)++;
        else
            (pred[i] == 1 ? fp : tn)++;
    }
    if (tp + fn == 0) throw DataError("metrics: no positive-class samples in ground truth");
    if (tn + fp == 0) throw DataError("metrics: no negative-class samples in ground truth");
    Metrics m;
    m.acc = double(tp + tn) / double(truth.size());
    m.sen = double(tp) / double(tp + fn);
    m.spe = double(tn) / double(tn + fp);
    m.yi = m.sen + m.spe - 1.0;
    return m;
}

struct RocPoint {
    double threshold, fpr, tpr;
};

struct RocResult {
    std::vector<RocPoint> points;
    double auc = 0;
};

/// Threshold sweep over descending unique scores (ties grouped), AUC by
/// trapezoid.
inline RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& truth) {
    if (scores.size() != truth.size() || truth.empty())
        throw ContractError("roc_auc: score/label size mismatch or empty");
    std::size_t n_pos = 0, n_neg = 0;
    for (int y : truth) (y == 1 ? n_pos : n_neg)++;
    if (n_pos == 0) throw DataError("roc_auc: no positive-class samples");
    if (n_neg == 0) throw DataError("roc_auc: no negative-class samples");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocResult r;
    const double sentinel = scores[order[0]] + 1.0;
    r.points.push_back({sentinel, 0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    double prev_fpr = 0.0, prev_tpr = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double thr = scores[order[i]];
        while (i < order.size() && scores[order[i]] == thr) {
            (truth[order[i]] == 1 ? tp : fp)++;
            ++i;
        }
        const double fpr = double(fp) / double(n_neg);
        const double tpr = double(tp) / double(n_pos);
        r.points.push_back({thr, fpr, tpr});
        r.auc += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    return r;
}

struct FoldResult {
    Metrics m;
    double auc = 0;
    RocResult roc;
    std::vector<std::size_t> train_ids;
    std::vector<std::size_t> test_ids;
    std::vector<double> scores;
    std::vector<int> truth;
};

struct EvalReport {
    std::vector<FoldResult> folds;
    Metrics mean, sd;
    double mean_auc = 0, sd_auc = 0;
    RocResult pooled_roc;
};

struct TrainRun {
    Algorithm algorithm = Algorithm::Ddstn;
    NetworkSpec source_spec;
    NetworkSpec target_spec;
    TrainConfig config;
};

namespace detail {

inline void mean_sd(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    sd = 0;
    if (xs.size() > 1) {
        for (double x : xs) sd += (x - mean) * (x - mean);
        sd = std::sqrt(sd / double(xs.size() - 1));  // sample SD
    }
}

}  // namespace detail

/// Per fold: train on all paired data plus non-test unpaired data, evaluate
/// on the fold's test unpaired data. Aggregates mean and sample SD.
inline EvalReport cross_validate(const BimodalDataset& ds, const FoldPlan& plan,
                                 const TrainRun& run) {
    std::vector<std::size_t> known;
    for (const auto& r : ds.unpaired) known.push_back(r.id);
    std::sort(known.begin(), known.end());
    for (const auto& fold : plan.test_ids)
        for (std::size_t id : fold)
            if (!std::binary_search(known.begin(), known.end(), id))
                throw DataError("fold references unknown unpaired id " + std::to_string(id));

    EvalReport report;
    for (const auto& test_ids : plan.test_ids) {
        BimodalDataset train_ds;
        train_ds.mode = ds.mode;
        train_ds.dim_s = ds.dim_s;
        train_ds.dim_t = ds.dim_t;
        train_ds.paired = ds.paired;
        FoldResult fr;
        fr.test_ids = test_ids;
        std::vector<const UnpairedRecord*> test_recs;
        for (const auto& r : ds.unpaired) {
            if (std::binary_search(test_ids.begin(), test_ids.end(), r.id)) {
                test_recs.push_back(&r);
            } else {
                train_ds.unpaired.push_back(r);
                fr.train_ids.push_back(r.id);
            }
        }
        for (const auto& r : ds.paired) fr.train_ids.push_back(r.id);
        std::sort(fr.train_ids.begin(), fr.train_ids.end());

        TrainedModel model =
            train(run.algorithm, train_ds, run.source_spec, run.target_spec, run.config);

        std::vector<const std::vector<double>*> rows;
        for (const auto* r : test_recs) {
            rows.push_back(&r->x_t);
            fr.truth.push_back(r->label);
        }
        Prediction pred = predict(model, ds.stack(rows, ds.dim_t));
        fr.scores = pred.scores;
        fr.m = metrics(pred.labels, fr.truth);
        fr.roc = roc_auc(fr.scores, fr.truth);
        fr.auc = fr.roc.auc;
        report.folds.push_back(std::move(fr));
    }

    std::vector<double> accs, sens, spes, yis, aucs;
    std::vector<double> pooled_scores;
    std::vector<int> pooled_truth;
    for (const auto& f : report.folds) {
        accs.push_back(f.m.acc);
        sens.push_back(f.m.sen);
        spes.push_back(f.m.spe);
        yis.push_back(f.m.yi);
        aucs.push_back(f.auc);
        pooled_scores.insert(pooled_scores.end(), f.scores.begin(), f.scores.end());
        pooled_truth.insert(pooled_truth.end(), f.truth.begin(), f.truth.end());
    }
    detail::mean_sd(accs, report.mean.acc, report.sd.acc);
    detail::mean_sd(sens, report.mean.sen, report.sd.sen);
    detail::mean_sd(spes, report.mean.spe, report.sd.spe);
    detail::mean_sd(yis, report.mean.yi, report.sd.yi);
    detail::mean_sd(aucs, report.mean_auc, report.sd_auc);
    report.pooled_roc = roc_auc(pooled_scores, pooled_truth);
    return report;
}

// ---- serialization -------------------------------------------------------

inline nlohmann::json metrics_to_json(const Metrics& m) {
    return {{"acc", m.acc}, {"sen", m.sen}, {"spe", m.spe}, {"yi", m.yi}};
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.folds) {
        nlohmann::json roc = nlohmann::json::array();
        for (const auto& p : f.roc.points)
            roc.push_back({{"threshold", p.threshold}, {"fpr", p.fpr}, {"tpr", p.tpr}});
        folds.push_back({{"metrics", metrics_to_json(f.m)},
                         {"auc", f.auc},
                         {"roc", roc},
                         {"train_ids", f.train_ids},
                         {"test_ids", f.test_ids}});
    }
    return {{"folds", folds},
            {"mean", metrics_to_json(r.mean)},
            {"sd", metrics_to_json(r.sd)},
            {"mean_auc", r.mean_auc},
            {"sd_auc", r.sd_auc},
            {"pooled_auc", r.pooled_roc.auc}};
}

inline void save_roc_csv(const RocResult& roc, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "threshold,fpr,tpr\n";
    for (const auto& p : roc.points)
        out << detail::fmt17(p.threshold) << "," << detail::fmt17(p.fpr) << ","
            << detail::fmt17(p.tpr) << "\n";
}

}  // namespace ddstn
