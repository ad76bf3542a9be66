#pragma once
// Evaluation of a trained checkpoint on a SceneSet split: classification
// metrics per observation label and CAM-based localization against ground
// truth boxes, for both observation CAMs (lesions) and anatomy CAMs (abnormal
// regions). Inference uses H^k = 0 throughout.

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "agx/config.hpp"
#include "agx/dataset.hpp"
#include "agx/joint_graph.hpp"
#include "agx/locmetrics.hpp"
#include "agx/pgm.hpp"
#include "agx/synth.hpp"

namespace agx::harness {

struct EvalOptions {
    Split split = Split::Test;
    std::string heatmap_dir;  // empty: no heatmap export
    PgmFormat heatmap_format = PgmFormat::P5_binary;
};

namespace eval_detail {

inline std::string threshold_key(double t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", t);
    return buf;
}

struct LocAccumulator {
    loc::MatchCounts counts;
    std::size_t images = 0;
    std::size_t images_hit = 0;

    void add(const loc::MatchCounts& c) {
        counts += c;
        ++images;
        if (c.covered_gt > 0) ++images_hit;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["gt_boxes"] = counts.gt_total;
        j["generated_boxes"] = counts.pred_total;
        j["true_positive_boxes"] = counts.true_positive_preds;
        j["covered_gt_boxes"] = counts.covered_gt;
        if (auto r = counts.recall()) j["recall"] = *r;
        if (auto p = counts.precision()) j["precision"] = *p;
        j["images"] = images;
        j["images_hit"] = images_hit;
        if (images > 0)
            j["image_recall"] = static_cast<double>(images_hit) / static_cast<double>(images);
        return j;
    }
};

inline nlohmann::json ranking_entry(const std::vector<double>& scores,
                                    const std::vector<std::uint8_t>& labels) {
    nlohmann::json j;
    std::size_t pos = 0;
    for (auto l : labels) pos += l;
    j["n"] = labels.size();
    j["n_pos"] = pos;
    if (pos > 0 && pos < labels.size()) {
        j["auprc"] = loc::auprc(scores, labels);
        j["auroc"] = loc::auroc(scores, labels);
    }
    return j;
}

}  // namespace eval_detail

inline nlohmann::json evaluate(const SceneSet& data, const net::ModelParams& model,
                               const ExperimentConfig& cfg, const EvalOptions& opts = {}) {
    using namespace eval_detail;
    loc::EvalConfig ecfg{cfg.quantile, cfg.connectivity, cfg.iou_thresholds};
    auto idx = data.indices(opts.split);
    if (idx.empty()) throw Error("evaluate: empty split");

    const std::size_t n_obs = data.labels.n_observation();
    const std::size_t n_anat = data.labels.n_anatomy();
    const bool has_truth = !data.scenes[idx.front()].true_obs.empty();
    const std::size_t H = data.scenes[idx.front()].image.dim(1);
    const std::size_t W = data.scenes[idx.front()].image.dim(2);

    if (!opts.heatmap_dir.empty()) std::filesystem::create_directories(opts.heatmap_dir);

    // one inference pass per scene
    std::vector<net::InferenceOutput> outputs;
    outputs.reserve(idx.size());
    for (std::size_t i : idx) outputs.push_back(net::infer(data.scenes[i].image, model));

    nlohmann::json report;
    report["split"] = split_name(opts.split);
    report["n_scenes"] = idx.size();

    // ---- classification -------------------------------------------------
    nlohmann::json classification;
    for (std::size_t k = 0; k < n_obs; ++k) {
        nlohmann::json entry;
        std::vector<double> scores;
        for (std::size_t s = 0; s < idx.size(); ++s) scores.push_back(outputs[s].obs_probs[k]);

        if (has_truth) {
            std::vector<std::uint8_t> truth;
            for (std::size_t i : idx) truth.push_back(data.scenes[i].true_obs[k]);
            entry["true"] = ranking_entry(scores, truth);
        }
        // report-label metrics on P/N samples only
        std::vector<double> rl_scores;
        std::vector<std::uint8_t> rl_labels;
        for (std::size_t s = 0; s < idx.size(); ++s) {
            auto labels = report::derive_labels(data.scenes[idx[s]].matrix);
            Label3 l = labels.obs_labels[data.labels.observation_cols[k]];
            if (l == Label3::Unlabeled) continue;
            rl_scores.push_back(scores[s]);
            rl_labels.push_back(l == Label3::Positive ? 1 : 0);
        }
        if (!rl_labels.empty()) entry["report"] = ranking_entry(rl_scores, rl_labels);
        classification[data.labels.observation_tokens[k]] = std::move(entry);
    }
    report["classification"] = std::move(classification);

    // ---- observation localization ---------------------------------------
    nlohmann::json obs_loc;
    std::map<std::string, LocAccumulator> pooled_obs;  // threshold -> pooled
    for (std::size_t k = 0; k < n_obs; ++k) {
        std::map<std::string, LocAccumulator> acc;
        for (std::size_t s = 0; s < idx.size(); ++s) {
            const Scene& scene = data.scenes[idx[s]];
            std::vector<loc::BBox> gt;
            for (const auto& lesion : scene.lesions)
                if (lesion.obs == k) gt.push_back(lesion.box);
            if (gt.empty()) continue;
            Tensor cam = loc::upsample_bilinear(outputs[s].obs_cams[k], H, W);
            auto boxes = loc::cam_to_boxes(cam, ecfg);
            for (double t : ecfg.iou_thresholds)
                acc[threshold_key(t)].add(loc::match_and_score(boxes, gt, t));
            if (!opts.heatmap_dir.empty())
                write_pgm(opts.heatmap_dir + "/" + scene.id + "_" +
                              data.labels.observation_tokens[k] + ".pgm",
                          cam, opts.heatmap_format);
        }
        nlohmann::json entry;
        for (const auto& [t, a] : acc) {
            entry[t] = a.to_json();
            pooled_obs[t].counts += a.counts;
            pooled_obs[t].images += a.images;
            pooled_obs[t].images_hit += a.images_hit;
        }
        obs_loc[data.labels.observation_tokens[k]] = std::move(entry);
    }
    nlohmann::json pooled_json;
    for (const auto& [t, a] : pooled_obs) pooled_json[t] = a.to_json();
    obs_loc["pooled"] = std::move(pooled_json);
    report["observation_localization"] = std::move(obs_loc);

    // ---- anatomy localization -------------------------------------------
    if (has_truth && !data.region_boxes.empty()) {
        nlohmann::json anat_loc;
        std::map<std::string, LocAccumulator> pooled_anat;
        for (std::size_t j = 0; j < n_anat; ++j) {
            std::map<std::string, LocAccumulator> acc;
            for (std::size_t s = 0; s < idx.size(); ++s) {
                const Scene& scene = data.scenes[idx[s]];
                if (!scene.true_anat[j]) continue;
                Tensor cam = loc::upsample_bilinear(outputs[s].anat_cams[j], H, W);
                auto boxes = loc::cam_to_boxes(cam, ecfg);
                std::vector<loc::BBox> gt = {data.region_boxes[j]};
                for (double t : ecfg.iou_thresholds)
                    acc[threshold_key(t)].add(loc::match_and_score(boxes, gt, t));
                if (!opts.heatmap_dir.empty())
                    write_pgm(opts.heatmap_dir + "/" + scene.id + "_" +
                                  data.labels.anatomy_tokens[j] + ".pgm",
                              cam, opts.heatmap_format);
            }
            nlohmann::json entry;
            for (const auto& [t, a] : acc) {
                entry[t] = a.to_json();
                pooled_anat[t].counts += a.counts;
                pooled_anat[t].images += a.images;
                pooled_anat[t].images_hit += a.images_hit;
            }
            anat_loc[data.labels.anatomy_tokens[j]] = std::move(entry);
        }
        nlohmann::json pooled_anat_json;
        for (const auto& [t, a] : pooled_anat) pooled_anat_json[t] = a.to_json();
        anat_loc["pooled"] = std::move(pooled_anat_json);
        report["anatomy_localization"] = std::move(anat_loc);
    }
    return report;
}

// Per-observation score table for the pu-estimate CLI: one CSV per label with
// columns sample_id, split, label (P/N/U by the report), score.
inline std::map<std::string, std::string> score_tables(const SceneSet& data,
                                                       const net::ModelParams& model) {
    std::map<std::string, std::string> tables;
    std::vector<std::string> rows_header = {"sample_id,split,label,score\n"};
    std::vector<std::ostringstream> out(data.labels.n_observation());
    for (auto& o : out) o << rows_header[0];
    for (std::size_t i = 0; i < data.scenes.size(); ++i) {
        auto inferred = net::infer(data.scenes[i].image, model);
        auto labels = report::derive_labels(data.scenes[i].matrix);
        for (std::size_t k = 0; k < data.labels.n_observation(); ++k) {
            Label3 l = labels.obs_labels[data.labels.observation_cols[k]];
            char letter = l == Label3::Positive ? 'P' : (l == Label3::Negative ? 'N' : 'U');
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", inferred.obs_probs[k]);
            out[k] << data.scenes[i].id << ',' << split_name(data.split[i]) << ',' << letter << ','
                   << buf << '\n';
        }
    }
    for (std::size_t k = 0; k < data.labels.n_observation(); ++k)
        tables[data.labels.observation_tokens[k]] = out[k].str();
    return tables;
}

// Pooled observation-box recall at one threshold; convenience for ablation
// and acceptance checks.
inline std::optional<double> pooled_recall(const nlohmann::json& report, double threshold) {
    const auto& pooled = report.at("observation_localization").at("pooled");
    auto key = eval_detail::threshold_key(threshold);
    if (!pooled.contains(key) || !pooled.at(key).contains("recall")) return std::nullopt;
    return pooled.at(key).at("recall").get<double>();
}

}  // namespace agx::harness
