#pragma once
// Experiment configuration: one flat struct covering training, evaluation,
// PU learning, synthetic-data generation and ablation switches. Loaded from a
// JSON key-value file; unknown keys are rejected to catch typos.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "agx/error.hpp"

namespace agx::harness {

struct ExperimentConfig {
    // model / training
    double beta = 0.1;
    bool aga_enabled = true;
    bool pu_enabled = false;
    double learning_rate = 0.01;
    double lr_decay_factor = 0.1;
    std::size_t lr_decay_epochs = 6;
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t channels = 8;
    std::size_t conv_layers = 3;
    std::uint64_t seed = 0;

    // evaluation
    double quantile = 0.95;
    int connectivity = 8;
    std::vector<double> iou_thresholds = {0.1, 0.25, 0.5};

    // PU learning
    double pu_delta = 0.1;
    double pu_gamma = 0.01;
    std::size_t pu_patience = 2;
    std::size_t pu_max_iterations = 5;
    std::size_t warmstart_epochs = 10;
    std::size_t pu_epochs = 4;

    // synthesis
    std::size_t scenes = 500;
    std::size_t image_size = 32;
    std::size_t grid = 3;             // R: anatomy regions per image side
    std::size_t observations = 4;     // synthetic observation labels
    double plant_rate = 0.3;
    double second_region_rate = 0.15;
    double neg_mention_rate = 0.3;
    double mention_dropout = 0.0;
    double target_alpha = -1.0;       // >= 0 derives mention_dropout (see synth)
    double lesion_intensity_min = 0.5;
    double lesion_intensity_max = 0.9;
    std::size_t lesion_size_min = 2;  // shape half-extent in pixels
    std::size_t lesion_size_max = 3;
    double noise_level = 0.02;
    double confound_rate = 0.0;       // shortcut artifact co-occurrence

    // ablation
    std::size_t ablation_seeds = 5;
    std::vector<double> beta_sweep = {};

    void validate() const {
        if (beta < 0.0) throw Error("config: beta must be >= 0");
        if (batch_size < 1) throw Error("config: batch_size must be >= 1");
        if (quantile <= 0.0 || quantile >= 1.0) throw Error("config: quantile must lie in (0,1)");
        if (connectivity != 4 && connectivity != 8) throw Error("config: connectivity must be 4 or 8");
        for (double t : iou_thresholds)
            if (t <= 0.0 || t > 1.0) throw Error("config: iou thresholds must lie in (0,1]");
        if (mention_dropout < 0.0 || mention_dropout >= 1.0)
            throw Error("config: mention_dropout must lie in [0,1)");
        if (plant_rate < 0.0 || plant_rate > 1.0) throw Error("config: plant_rate must lie in [0,1]");
        if (grid < 1) throw Error("config: grid must be >= 1");
        if (observations < 1) throw Error("config: observations must be >= 1");
        if (lesion_size_min < 1 || lesion_size_max < lesion_size_min)
            throw Error("config: bad lesion size range");
        if (image_size / grid < 2 * lesion_size_max + 3)
            throw Error("config: regions too small for the lesion size range");
        if (conv_layers < 1 || (image_size >> conv_layers) < 1)
            throw Error("config: conv stack collapses the image");
    }
};

namespace config_detail {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace config_detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {
        "beta", "aga_enabled", "pu_enabled", "learning_rate", "lr_decay_factor",
        "lr_decay_epochs", "epochs", "batch_size", "momentum", "weight_decay", "channels",
        "conv_layers", "seed", "quantile", "connectivity", "iou_thresholds", "pu_delta",
        "pu_gamma", "pu_patience", "pu_max_iterations", "warmstart_epochs", "pu_epochs",
        "scenes", "image_size", "grid", "observations", "plant_rate", "second_region_rate",
        "neg_mention_rate", "mention_dropout", "target_alpha", "lesion_intensity_min",
        "lesion_intensity_max", "lesion_size_min", "lesion_size_max", "noise_level",
        "confound_rate", "ablation_seeds", "beta_sweep"};
    if (!j.is_object()) throw Error("config: top level must be an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const auto& k : known)
            if (k == key) ok = true;
        if (!ok) throw Error("config: unknown key '" + key + "'");
    }
    using config_detail::read_key;
    ExperimentConfig c;
    read_key(j, "beta", c.beta);
    read_key(j, "aga_enabled", c.aga_enabled);
    read_key(j, "pu_enabled", c.pu_enabled);
    read_key(j, "learning_rate", c.learning_rate);
    read_key(j, "lr_decay_factor", c.lr_decay_factor);
    read_key(j, "lr_decay_epochs", c.lr_decay_epochs);
    read_key(j, "epochs", c.epochs);
    read_key(j, "batch_size", c.batch_size);
    read_key(j, "momentum", c.momentum);
    read_key(j, "weight_decay", c.weight_decay);
    read_key(j, "channels", c.channels);
    read_key(j, "conv_layers", c.conv_layers);
    read_key(j, "seed", c.seed);
    read_key(j, "quantile", c.quantile);
    read_key(j, "connectivity", c.connectivity);
    read_key(j, "iou_thresholds", c.iou_thresholds);
    read_key(j, "pu_delta", c.pu_delta);
    read_key(j, "pu_gamma", c.pu_gamma);
    read_key(j, "pu_patience", c.pu_patience);
    read_key(j, "pu_max_iterations", c.pu_max_iterations);
    read_key(j, "warmstart_epochs", c.warmstart_epochs);
    read_key(j, "pu_epochs", c.pu_epochs);
    read_key(j, "scenes", c.scenes);
    read_key(j, "image_size", c.image_size);
    read_key(j, "grid", c.grid);
    read_key(j, "observations", c.observations);
    read_key(j, "plant_rate", c.plant_rate);
    read_key(j, "second_region_rate", c.second_region_rate);
    read_key(j, "neg_mention_rate", c.neg_mention_rate);
    read_key(j, "mention_dropout", c.mention_dropout);
    read_key(j, "target_alpha", c.target_alpha);
    read_key(j, "lesion_intensity_min", c.lesion_intensity_min);
    read_key(j, "lesion_intensity_max", c.lesion_intensity_max);
    read_key(j, "lesion_size_min", c.lesion_size_min);
    read_key(j, "lesion_size_max", c.lesion_size_max);
    read_key(j, "noise_level", c.noise_level);
    read_key(j, "confound_rate", c.confound_rate);
    read_key(j, "ablation_seeds", c.ablation_seeds);
    read_key(j, "beta_sweep", c.beta_sweep);
    c.validate();
    return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    return nlohmann::json{
        {"beta", c.beta},
        {"aga_enabled", c.aga_enabled},
        {"pu_enabled", c.pu_enabled},
        {"learning_rate", c.learning_rate},
        {"lr_decay_factor", c.lr_decay_factor},
        {"lr_decay_epochs", c.lr_decay_epochs},
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"momentum", c.momentum},
        {"weight_decay", c.weight_decay},
        {"channels", c.channels},
        {"conv_layers", c.conv_layers},
        {"seed", c.seed},
        {"quantile", c.quantile},
        {"connectivity", c.connectivity},
        {"iou_thresholds", c.iou_thresholds},
        {"pu_delta", c.pu_delta},
        {"pu_gamma", c.pu_gamma},
        {"pu_patience", c.pu_patience},
        {"pu_max_iterations", c.pu_max_iterations},
        {"warmstart_epochs", c.warmstart_epochs},
        {"pu_epochs", c.pu_epochs},
        {"scenes", c.scenes},
        {"image_size", c.image_size},
        {"grid", c.grid},
        {"observations", c.observations},
        {"plant_rate", c.plant_rate},
        {"second_region_rate", c.second_region_rate},
        {"neg_mention_rate", c.neg_mention_rate},
        {"mention_dropout", c.mention_dropout},
        {"target_alpha", c.target_alpha},
        {"lesion_intensity_min", c.lesion_intensity_min},
        {"lesion_intensity_max", c.lesion_intensity_max},
        {"lesion_size_min", c.lesion_size_min},
        {"lesion_size_max", c.lesion_size_max},
        {"noise_level", c.noise_level},
        {"confound_rate", c.confound_rate},
        {"ablation_seeds", c.ablation_seeds},
        {"beta_sweep", c.beta_sweep},
    };
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("config: cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("config: parse error in ") + path + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace agx::harness
