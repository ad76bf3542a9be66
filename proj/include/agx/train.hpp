#pragma once
// Training loop for the two-branch classifier over a SceneSet, with optional
// PU self-training. Single-threaded and fully deterministic in (seed, config):
// batch order, initialization and scoring all derive from the master seed.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "agx/config.hpp"
#include "agx/dataset.hpp"
#include "agx/joint_graph.hpp"
#include "agx/locmetrics.hpp"
#include "agx/pu.hpp"
#include "agx/synth.hpp"
#include "agx/toynet.hpp"

namespace agx::harness {

inline net::Arch arch_from_config(const ExperimentConfig& cfg, const net::LabelSpace& labels) {
    net::Arch arch;
    arch.conv_layers = cfg.conv_layers;
    arch.channels = cfg.channels;
    arch.n_anatomy_labels = labels.n_anatomy();
    arch.n_observation_labels = labels.n_observation();
    return arch;
}

class Trainer {
public:
    Trainer(const SceneSet& data, const ExperimentConfig& cfg, net::ModelParams init)
        : data_(data), cfg_(cfg), model_(std::move(init)),
          shuffle_rng_(synth_detail::mix(cfg.seed, 0x7EA1)) {
        cfg_.validate();
        train_idx_ = data_.indices(Split::Train);
        val_idx_ = data_.indices(Split::Val);
        if (train_idx_.empty()) throw Error("train: empty training split");
        for (const auto& scene : data_.scenes) {
            auto labels = report::derive_labels(scene.matrix);
            std::vector<Label3> obs;
            std::vector<std::uint8_t> anat;
            for (std::size_t k : data_.labels.observation_cols) obs.push_back(labels.obs_labels[k]);
            for (std::size_t j : data_.labels.anatomy_rows) anat.push_back(labels.anat_labels[j]);
            obs_labels_.push_back(std::move(obs));
            anat_labels_.push_back(std::move(anat));
        }
        removed_.assign(data_.labels.n_observation(), {});
    }

    // PU removal sets, keyed by observation token.
    void set_removed(const std::map<std::string, std::set<std::string>>& removed_by_token) {
        removed_.assign(data_.labels.n_observation(), {});
        for (const auto& [token, ids] : removed_by_token) {
            std::size_t k = obs_index(token);
            for (const auto& id : ids) removed_[k].insert(scene_index(id));
        }
    }

    void run_epochs(std::size_t n) {
        auto anat_w = anatomy_weights();
        auto obs_w = observation_weights();
        for (std::size_t e = 0; e < n; ++e) {
            double lr = cfg_.learning_rate *
                        std::pow(cfg_.lr_decay_factor,
                                 static_cast<double>(epoch_ / std::max<std::size_t>(1, cfg_.lr_decay_epochs)));
            std::vector<std::size_t> order = train_idx_;
            std::shuffle(order.begin(), order.end(), shuffle_rng_);

            double joint_sum = 0.0, anat_sum = 0.0, obs_sum = 0.0;
            std::size_t batches = 0;
            for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
                std::size_t end = std::min(order.size(), start + cfg_.batch_size);
                std::vector<net::BatchItem> batch;
                for (std::size_t b = start; b < end; ++b) batch.push_back(make_item(order[b]));
                auto graph = net::build_joint_loss(batch, model_, data_.labels, cfg_.beta,
                                                   cfg_.aga_enabled, anat_w, obs_w);
                double loss = ad::scalar(graph.loss);
                if (!std::isfinite(loss))
                    throw Error("train: loss diverged (non-finite) at epoch " +
                                std::to_string(epoch_) + ", batch " + std::to_string(batches));
                ad::backward(graph.loss);
                apply_sgd(graph, lr);
                joint_sum += loss;
                anat_sum += graph.anat_branch;
                obs_sum += graph.obs_branch;
                ++batches;
            }
            nlohmann::json entry;
            entry["epoch"] = epoch_;
            entry["lr"] = lr;
            entry["joint_loss"] = joint_sum / static_cast<double>(batches);
            entry["anatomy_loss"] = anat_sum / static_cast<double>(batches);
            entry["observation_loss"] = obs_sum / static_cast<double>(batches);
            ++ticks_;  // model changed: invalidate cached scores
            if (!val_idx_.empty()) entry["val_auprc"] = validation_auprc();
            log_.push_back(std::move(entry));
            ++epoch_;
        }
    }

    // Mean AUPRC over observation labels with both report classes present in
    // the validation split (positives = P, negatives = N, unlabeled excluded).
    double validation_auprc() const {
        double sum = 0.0;
        std::size_t counted = 0;
        for (std::size_t k = 0; k < data_.labels.n_observation(); ++k) {
            std::vector<double> scores;
            std::vector<std::uint8_t> labels;
            for (std::size_t i : val_idx_) {
                Label3 l = obs_labels_[i][k];
                if (l == Label3::Unlabeled) continue;
                scores.push_back(score(i, k));
                labels.push_back(l == Label3::Positive ? 1 : 0);
            }
            bool has_pos = false, has_neg = false;
            for (auto l : labels) (l ? has_pos : has_neg) = true;
            if (!has_pos || !has_neg) continue;
            sum += loc::auprc(scores, labels);
            ++counted;
        }
        return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
    }

    pu::ScoreSets validation_scores(const std::string& token) const {
        std::size_t k = obs_index(token);
        pu::ScoreSets s;
        for (std::size_t i : val_idx_) {
            double z = score(i, k);
            switch (obs_labels_[i][k]) {
                case Label3::Positive: s.z_p.push_back(z); break;
                case Label3::Negative: s.z_n.push_back(z); break;
                case Label3::Unlabeled: s.z_u.push_back(z); break;
            }
        }
        return s;
    }

    std::vector<std::pair<std::string, double>> unlabeled_train_scores(
        const std::string& token) const {
        std::size_t k = obs_index(token);
        std::vector<std::pair<std::string, double>> out;
        for (std::size_t i : train_idx_)
            if (obs_labels_[i][k] == Label3::Unlabeled)
                out.push_back({data_.scenes[i].id, score(i, k)});
        return out;
    }

    const net::ModelParams& model() const { return model_; }
    net::ModelParams& model() { return model_; }
    const nlohmann::json& log() const { return log_; }
    std::size_t epoch() const { return epoch_; }
    const SceneSet& data() const { return data_; }

    Label3 observed_label(std::size_t scene, std::size_t obs) const {
        return obs_labels_[scene][obs];
    }

private:
    std::size_t obs_index(const std::string& token) const {
        for (std::size_t k = 0; k < data_.labels.observation_tokens.size(); ++k)
            if (data_.labels.observation_tokens[k] == token) return k;
        throw Error("train: unknown observation label '" + token + "'");
    }

    std::size_t scene_index(const std::string& id) const {
        for (std::size_t i = 0; i < data_.scenes.size(); ++i)
            if (data_.scenes[i].id == id) return i;
        throw Error("train: unknown scene id '" + id + "'");
    }

    net::BatchItem make_item(std::size_t i) {
        net::BatchItem item;
        item.image = &data_.scenes[i].image;
        item.matrix = &data_.scenes[i].matrix;
        item.obs_labels = obs_labels_[i];
        item.anat_labels = anat_labels_[i];
        item.obs_active.assign(data_.labels.n_observation(), 1);
        for (std::size_t k = 0; k < removed_.size(); ++k)
            if (removed_[k].count(i)) item.obs_active[k] = 0;
        return item;
    }

    std::vector<net::LossWeights> anatomy_weights() const {
        std::vector<net::LossWeights> w;
        for (std::size_t j = 0; j < data_.labels.n_anatomy(); ++j) {
            std::size_t pos = 0, neg = 0;
            for (std::size_t i : train_idx_) (anat_labels_[i][j] ? pos : neg)++;
            w.push_back(net::LossWeights::from_counts(pos, neg));
        }
        return w;
    }

    std::vector<net::LossWeights> observation_weights() const {
        std::vector<net::LossWeights> w;
        for (std::size_t k = 0; k < data_.labels.n_observation(); ++k) {
            std::size_t pos = 0, neg = 0;
            for (std::size_t i : train_idx_) {
                if (removed_[k].count(i)) continue;
                (obs_labels_[i][k] == Label3::Positive ? pos : neg)++;
            }
            w.push_back(net::LossWeights::from_counts(pos, neg));
        }
        return w;
    }

    void apply_sgd(net::JointGraph& graph, double lr) {
        auto tensors = net::param_tensors(model_);
        auto nodes = graph.params.all();
        std::vector<Tensor> zero_pads;
        zero_pads.reserve(tensors.size());
        std::vector<const Tensor*> grads;
        for (std::size_t t = 0; t < tensors.size(); ++t) {
            const Tensor& g = (*nodes[t])->grad;
            if (g.size() == tensors[t]->size()) {
                grads.push_back(&g);
            } else {  // parameter unreachable in this batch's graph
                zero_pads.push_back(Tensor::zeros_like(*tensors[t]));
                grads.push_back(&zero_pads.back());
            }
        }
        net::sgd_step(tensors, grads, sgd_, lr, cfg_.momentum, cfg_.weight_decay);
    }

    double score(std::size_t scene, std::size_t obs) const {
        ensure_scores();
        if (score_cache_[scene].empty()) throw Error("train: scoring a test-split scene");
        return score_cache_[scene][obs];
    }

    // Observation probabilities with H = 0, cached until the model changes.
    void ensure_scores() const {
        if (score_epoch_ == ticks_) return;
        score_cache_.assign(data_.scenes.size(), {});
        for (std::size_t i = 0; i < data_.scenes.size(); ++i) {
            if (data_.split[i] == Split::Test) continue;  // scored by evaluate()
            auto out = net::infer(data_.scenes[i].image, model_);
            score_cache_[i] = std::move(out.obs_probs);
        }
        score_epoch_ = ticks_;
    }

public:
    // Invalidate cached scores; called automatically by run_epochs.
    void touch() { ++ticks_; }

private:
    const SceneSet& data_;
    ExperimentConfig cfg_;
    net::ModelParams model_;
    net::SgdState sgd_;
    std::mt19937_64 shuffle_rng_;
    std::vector<std::size_t> train_idx_, val_idx_;
    std::vector<std::vector<Label3>> obs_labels_;
    std::vector<std::vector<std::uint8_t>> anat_labels_;
    std::vector<std::set<std::size_t>> removed_;
    nlohmann::json log_ = nlohmann::json::array();
    std::size_t epoch_ = 0;
    std::uint64_t ticks_ = 1;
    mutable std::uint64_t score_epoch_ = 0;
    mutable std::vector<std::vector<double>> score_cache_;
};

struct TrainResult {
    net::ModelParams model;
    nlohmann::json log;           // per-epoch entries
    nlohmann::json pu_log;        // present when pu_enabled
};

inline nlohmann::json pu_log_to_json(const pu::SelfTrainLog& log) {
    nlohmann::json j;
    j["warm_start_auprc"] = log.warm_start_auprc;
    j["best_auprc"] = log.best_auprc;
    j["best_iteration"] = log.best_iteration;
    j["warnings"] = log.warnings;
    j["iterations"] = nlohmann::json::array();
    for (const auto& it : log.iterations) {
        nlohmann::json ji;
        ji["iteration"] = it.iteration;
        ji["validation_auprc"] = it.validation_auprc;
        ji["labels"] = nlohmann::json::array();
        for (const auto& li : it.labels) {
            nlohmann::json jl;
            jl["label"] = li.label;
            jl["removed"] = li.removed;
            jl["provisional_negatives"] = li.provisional_negatives;
            if (li.estimate) {
                jl["alpha"] = li.estimate->alpha;
                jl["threshold"] = li.estimate->best_bin_threshold;
            }
            ji["labels"].push_back(std::move(jl));
        }
        j["iterations"].push_back(std::move(ji));
    }
    return j;
}

inline TrainResult train_model(const SceneSet& data, const ExperimentConfig& cfg,
                               std::optional<net::ModelParams> init = std::nullopt) {
    net::ModelParams start =
        init ? std::move(*init)
             : net::init_params(arch_from_config(cfg, data.labels),
                                synth_detail::mix(cfg.seed, 0x1217));
    Trainer trainer(data, cfg, std::move(start));

    TrainResult result{trainer.model(), {}, {}};
    if (!cfg.pu_enabled) {
        trainer.run_epochs(cfg.epochs);
        result.model = trainer.model();
        result.log = trainer.log();
        return result;
    }

    net::ModelParams best = trainer.model();
    pu::SelfTrainHooks hooks{
        [&](const std::map<std::string, std::set<std::string>>& removed, bool warm) {
            trainer.set_removed(removed);
            trainer.run_epochs(warm ? cfg.warmstart_epochs : cfg.pu_epochs);
        },
        [&](const std::string& label) { return trainer.validation_scores(label); },
        [&](const std::string& label) { return trainer.unlabeled_train_scores(label); },
        [&]() { return trainer.validation_auprc(); },
        [&]() { best = trainer.model(); },
        [&]() {
            trainer.model() = best;
            trainer.touch();
        },
    };
    pu::SelfTrainConfig pu_cfg;
    pu_cfg.delta = cfg.pu_delta;
    pu_cfg.gamma = cfg.pu_gamma;
    pu_cfg.patience = cfg.pu_patience;
    pu_cfg.max_iterations = cfg.pu_max_iterations;
    auto log = pu::self_train(data.labels.observation_tokens, hooks, pu_cfg);
    result.model = trainer.model();
    result.log = trainer.log();
    result.pu_log = pu_log_to_json(log);
    return result;
}

}  // namespace agx::harness
