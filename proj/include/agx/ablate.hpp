#pragma once
// Ablation harness: trains the three AGXNet variants (w/o AGA, w/ AGA,
// w/ AGA + PU) — or a beta sweep — over k seeds. Within one seed every
// variant consumes the identical dataset and identical initial weights.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "agx/config.hpp"
#include "agx/eval.hpp"
#include "agx/synth.hpp"
#include "agx/train.hpp"

namespace agx::harness {

struct AblationVariant {
    std::string name;
    bool aga = true;
    bool pu = false;
    double beta = 0.1;
};

inline std::vector<AblationVariant> ablation_variants(const ExperimentConfig& cfg) {
    std::vector<AblationVariant> variants;
    if (!cfg.beta_sweep.empty()) {
        for (double beta : cfg.beta_sweep) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "beta_%g", beta);
            variants.push_back({buf, true, false, beta});
        }
        return variants;
    }
    variants.push_back({"wo_aga", false, false, cfg.beta});
    variants.push_back({"w_aga", true, false, cfg.beta});
    variants.push_back({"w_aga_pu", true, true, cfg.beta});
    return variants;
}

namespace ablate_detail {

inline nlohmann::json mean_std(const std::vector<double>& xs) {
    nlohmann::json j;
    if (xs.empty()) return j;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    j["mean"] = mean;
    j["std"] = std::sqrt(var);
    return j;
}

}  // namespace ablate_detail

inline nlohmann::json run_ablation(const ExperimentConfig& base) {
    auto variants = ablation_variants(base);
    nlohmann::json out;
    out["seeds"] = nlohmann::json::array();
    nlohmann::json rows = nlohmann::json::array();

    // per variant, per metric key, values over seeds
    std::vector<std::map<std::string, std::vector<double>>> collected(variants.size());

    for (std::size_t s = 0; s < base.ablation_seeds; ++s) {
        ExperimentConfig seed_cfg = base;
        seed_cfg.seed = base.seed + s;
        out["seeds"].push_back(seed_cfg.seed);
        SceneSet data = synth_generate(seed_cfg);
        auto init = net::init_params(arch_from_config(seed_cfg, data.labels),
                                     synth_detail::mix(seed_cfg.seed, 0x1217));

        for (std::size_t v = 0; v < variants.size(); ++v) {
            ExperimentConfig vcfg = seed_cfg;
            vcfg.aga_enabled = variants[v].aga;
            vcfg.pu_enabled = variants[v].pu;
            vcfg.beta = variants[v].beta;
            auto result = train_model(data, vcfg, init);
            auto report = evaluate(data, result.model, vcfg);

            auto& bucket = collected[v];
            for (double t : vcfg.iou_thresholds) {
                if (auto r = pooled_recall(report, t))
                    bucket["recall@" + eval_detail::threshold_key(t)].push_back(*r);
                const auto& pooled = report.at("observation_localization").at("pooled");
                auto key = eval_detail::threshold_key(t);
                if (pooled.contains(key) && pooled.at(key).contains("precision"))
                    bucket["precision@" + key].push_back(
                        pooled.at(key).at("precision").get<double>());
            }
            double auprc_sum = 0.0;
            std::size_t auprc_n = 0;
            for (const auto& [token, entry] : report.at("classification").items()) {
                (void)token;
                if (entry.contains("true") && entry.at("true").contains("auprc")) {
                    auprc_sum += entry.at("true").at("auprc").get<double>();
                    ++auprc_n;
                }
            }
            if (auprc_n > 0) bucket["auprc_true"].push_back(auprc_sum / static_cast<double>(auprc_n));
            if (!result.pu_log.is_null() && result.pu_log.contains("iterations")) {
                // final-iteration alphas averaged over labels
                const auto& iters = result.pu_log.at("iterations");
                if (iters.size() > 1) {
                    double alpha_sum = 0.0;
                    std::size_t alpha_n = 0;
                    for (const auto& jl : iters.back().at("labels"))
                        if (jl.contains("alpha")) {
                            alpha_sum += jl.at("alpha").get<double>();
                            ++alpha_n;
                        }
                    if (alpha_n > 0) bucket["alpha_hat"].push_back(alpha_sum / static_cast<double>(alpha_n));
                }
            }
        }
    }

    for (std::size_t v = 0; v < variants.size(); ++v) {
        nlohmann::json row;
        row["variant"] = variants[v].name;
        row["aga_enabled"] = variants[v].aga;
        row["pu_enabled"] = variants[v].pu;
        row["beta"] = variants[v].beta;
        for (const auto& [metric, values] : collected[v]) {
            row["metrics"][metric] = ablate_detail::mean_std(values);
            row["metrics"][metric]["per_seed"] = values;
        }
        rows.push_back(std::move(row));
    }
    out["variants"] = std::move(rows);
    return out;
}

}  // namespace agx::harness
