#pragma once
// Synthetic benchmark generator. Scenes are single-channel images over an
// R x R grid of "anatomical regions" laid over a fixed smooth background (the
// background varies across the image so region identity is decodable from
// local patches). Observations are bright geometric lesions planted inside a
// region; the per-scene report matrix records observation-located_at-region
// relations as P entries, negative mentions as N at `unspecified`, and
// mention dropout corrupts planted P entries to U — the PU noise source with
// ground truth known by construction.

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "agx/config.hpp"
#include "agx/error.hpp"
#include "agx/joint_graph.hpp"
#include "agx/labels.hpp"
#include "agx/locmetrics.hpp"
#include "agx/report_graph.hpp"
#include "agx/tensor.hpp"

namespace agx::harness {

struct Lesion {
    std::size_t region = 0;     // trained anatomy label index (row-major grid)
    std::size_t obs = 0;        // trained observation label index
    loc::BBox box;              // tight pixel box
};

struct Scene {
    std::string id;
    Tensor image;  // 1 x H x W
    report::AdjacencyMatrix matrix;  // observed (corrupted) report
    std::vector<Lesion> lesions;
    std::vector<std::uint8_t> true_obs;   // per observation label
    std::vector<std::uint8_t> true_anat;  // per region
    bool has_confound = false;

    Scene(std::string id_, Tensor img, report::AdjacencyMatrix m)
        : id(std::move(id_)), image(std::move(img)), matrix(std::move(m)) {}
};

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

struct SceneSet {
    std::shared_ptr<const report::Vocabulary> vocab;
    net::LabelSpace labels;
    std::vector<Scene> scenes;
    std::vector<Split> split;               // per scene
    std::vector<loc::BBox> region_boxes;    // per trained anatomy label
    // realized positive fraction among unlabeled, per observation label,
    // indexed [split][obs]; -1 when the split has no unlabeled pool
    std::vector<std::vector<double>> true_alpha;
    double mention_dropout_used = 0.0;

    std::vector<std::size_t> indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < scenes.size(); ++i)
            if (split[i] == s) out.push_back(i);
        return out;
    }
};

namespace synth_detail {

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Fixed smooth "anatomy" backdrop: corner gradient plus a central bump.
inline double background(double u, double v) {
    double radial = std::exp(-((u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5)) / 0.08);
    return 0.18 + 0.10 * u + 0.07 * v + 0.06 * u * v + 0.05 * radial;
}

// Per-region base shade, scrambled so neighbours differ. Region identity is
// decodable from local appearance, the way tissue types differ in a radiograph.
inline double region_shade(std::size_t region, std::size_t grid) {
    std::size_t n = grid * grid;
    if (n <= 1) return 0.0;
    std::size_t scrambled = (region * 5 + 3) % n;
    return 0.12 * static_cast<double>(scrambled) / static_cast<double>(n - 1);
}

inline std::string obs_token(std::size_t k) {
    static const char* shapes[] = {"disk", "ring", "cross", "blob"};
    std::string base = shapes[k % 4];
    if (k >= 4) base += "_" + std::to_string(k / 4);
    return base;
}

inline std::string region_token(std::size_t r, std::size_t c) {
    return "region_" + std::to_string(r) + "_" + std::to_string(c);
}

// Paint one lesion; returns the tight box of painted pixels.
inline loc::BBox paint_lesion(Tensor& image, std::size_t shape, int cy, int cx, int half,
                              double intensity) {
    const int H = static_cast<int>(image.dim(1)), W = static_cast<int>(image.dim(2));
    int x_min = W, y_min = H, x_max = 0, y_max = 0;
    for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
            int y = cy + dy, x = cx + dx;
            if (y < 0 || x < 0 || y >= H || x >= W) continue;
            double r = std::sqrt(static_cast<double>(dy * dy + dx * dx));
            bool hit = false;
            switch (shape % 4) {
                case 0: hit = r <= half; break;                                   // disk
                case 1: hit = r <= half && r >= half * 0.5; break;                // ring
                case 2: hit = std::abs(dx) <= 1 || std::abs(dy) <= 1; break;      // cross
                case 3: hit = std::abs(dx) + std::abs(dy) <= half + half / 2; break;  // blob
            }
            if (!hit) continue;
            image.raw()[static_cast<std::size_t>(y) * W + x] += intensity;
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x + 1);
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y + 1);
        }
    return loc::BBox{x_min, y_min, x_max, y_max};
}

}  // namespace synth_detail

inline std::shared_ptr<const report::Vocabulary> synth_vocabulary(const ExperimentConfig& cfg) {
    std::vector<std::string> anat, obs;
    for (std::size_t r = 0; r < cfg.grid; ++r)
        for (std::size_t c = 0; c < cfg.grid; ++c)
            anat.push_back(synth_detail::region_token(r, c));
    for (std::size_t k = 0; k < cfg.observations; ++k)
        obs.push_back(synth_detail::obs_token(k));
    return std::make_shared<report::Vocabulary>(std::move(anat), std::move(obs));
}

// Solve for the mention-dropout rate that realizes a target unlabeled-pool
// positive fraction, given the generator's planting and mention rates.
// P(u & positive) = rho * f(d) with f(d) = (1-s) d + s d^2 (one or two P
// entries must all drop); P(u & negative) = (1-rho)(1-nu).
inline double dropout_for_alpha(double target_alpha, double plant_rate, double second_region_rate,
                                double neg_mention_rate) {
    if (target_alpha < 0.0 || target_alpha >= 1.0)
        throw Error("synth: target_alpha must lie in [0,1)");
    if (target_alpha == 0.0) return 0.0;
    if (plant_rate <= 0.0) throw Error("synth: target_alpha needs plant_rate > 0");
    const double neg_mass = (1.0 - plant_rate) * (1.0 - neg_mention_rate);
    auto alpha_of = [&](double d) {
        double f = (1.0 - second_region_rate) * d + second_region_rate * d * d;
        double pos_mass = plant_rate * f;
        return pos_mass / (pos_mass + neg_mass);
    };
    if (alpha_of(1.0) < target_alpha)
        throw Error("synth: target_alpha unreachable with these plant/mention rates");
    double lo = 0.0, hi = 1.0;
    for (int iter = 0; iter < 200; ++iter) {
        double mid = 0.5 * (lo + hi);
        (alpha_of(mid) < target_alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline SceneSet synth_generate(const ExperimentConfig& cfg) {
    cfg.validate();
    using namespace synth_detail;

    SceneSet out;
    out.vocab = synth_vocabulary(cfg);
    out.labels = net::LabelSpace::from_vocab(*out.vocab);
    const std::size_t R = cfg.grid, H = cfg.image_size, W = cfg.image_size;
    const std::size_t n_obs = cfg.observations;

    double dropout = cfg.mention_dropout;
    if (cfg.target_alpha >= 0.0)
        dropout = dropout_for_alpha(cfg.target_alpha, cfg.plant_rate,
                                    R > 1 ? cfg.second_region_rate : 0.0, cfg.neg_mention_rate);
    out.mention_dropout_used = dropout;

    // region pixel geometry, row-major
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < R; ++c)
            out.region_boxes.push_back(loc::BBox{
                static_cast<int>(c * W / R), static_cast<int>(r * H / R),
                static_cast<int>((c + 1) * W / R), static_cast<int>((r + 1) * H / R)});

    for (std::size_t s = 0; s < cfg.scenes; ++s) {
        std::mt19937_64 rng(mix(cfg.seed, s));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> noise(0.0, cfg.noise_level);
        std::uniform_real_distribution<double> intensity(cfg.lesion_intensity_min,
                                                         cfg.lesion_intensity_max);
        std::uniform_int_distribution<std::size_t> region_pick(0, R * R - 1);
        std::uniform_int_distribution<int> size_pick(static_cast<int>(cfg.lesion_size_min),
                                                     static_cast<int>(cfg.lesion_size_max));

        // inverse of the region boundaries floor(r*H/R)
        auto region_of = [](std::size_t p, std::size_t extent, std::size_t grid) {
            return ((p + 1) * grid + extent - 1) / extent - 1;
        };
        Tensor image({1, H, W});
        for (std::size_t y = 0; y < H; ++y) {
            std::size_t ry = std::min(R - 1, region_of(y, H, R));
            for (std::size_t x = 0; x < W; ++x) {
                std::size_t rx = std::min(R - 1, region_of(x, W, R));
                image.raw()[y * W + x] =
                    background(static_cast<double>(x) / (W - 1), static_cast<double>(y) / (H - 1)) +
                    region_shade(ry * R + rx, R) + noise(rng);
            }
        }

        char id_buf[32];
        std::snprintf(id_buf, sizeof(id_buf), "scene_%05zu", s);
        Scene scene(id_buf, Tensor({1}), report::AdjacencyMatrix(id_buf, out.vocab));
        scene.true_obs.assign(n_obs, 0);
        scene.true_anat.assign(R * R, 0);

        auto plant = [&](std::size_t k, std::size_t region) {
            const auto& rb = out.region_boxes[region];
            int half = size_pick(rng);
            std::uniform_int_distribution<int> cx_pick(rb.x_min + half + 1, rb.x_max - half - 2);
            std::uniform_int_distribution<int> cy_pick(rb.y_min + half + 1, rb.y_max - half - 2);
            auto box = paint_lesion(image, k, cy_pick(rng), cx_pick(rng), half, intensity(rng));
            scene.lesions.push_back({region, k, box});
            scene.true_obs[k] = 1;
            scene.true_anat[region] = 1;
            scene.matrix.set(out.labels.anatomy_rows[region], out.labels.observation_cols[k],
                             report::RelationState::P);
        };

        for (std::size_t k = 0; k < n_obs; ++k) {
            if (unit(rng) < cfg.plant_rate) {
                std::size_t region = region_pick(rng);
                plant(k, region);
                if (R * R > 1 && unit(rng) < cfg.second_region_rate) {
                    std::uniform_int_distribution<std::size_t> other(0, R * R - 2);
                    std::size_t second = (region + 1 + other(rng)) % (R * R);
                    plant(k, second);
                }
            } else if (unit(rng) < cfg.neg_mention_rate) {
                scene.matrix.set(out.vocab->unspecified_row(), out.labels.observation_cols[k],
                                 report::RelationState::N);
            }
        }

        // shortcut artifact: a fixed bright bar that co-occurs with any lesion
        bool any = false;
        for (auto v : scene.true_obs) any = any || v != 0;
        if (any && unit(rng) < cfg.confound_rate) {
            for (std::size_t x = 1; x + 1 < W / 2; ++x)
                for (std::size_t y = 1; y <= 2; ++y) image.raw()[y * W + x] += 0.7;
            scene.has_confound = true;
        }

        // mention dropout: every P entry independently degrades to U
        if (dropout > 0.0) {
            for (std::size_t j = 0; j < scene.matrix.n_rows(); ++j)
                for (std::size_t k = 0; k < scene.matrix.n_cols(); ++k) {
                    auto cell = scene.matrix.at(j, k);
                    if (cell && *cell == report::RelationState::P && unit(rng) < dropout) {
                        scene.matrix.clear(j, k);
                        scene.matrix.set(j, k, report::RelationState::U);
                    }
                }
        }

        scene.image = std::move(image);
        out.scenes.push_back(std::move(scene));
    }

    // 80/10/10 split by scene with a master-seeded shuffle
    std::vector<std::size_t> order(cfg.scenes);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 split_rng(mix(cfg.seed, 0xABCDEF));
    std::shuffle(order.begin(), order.end(), split_rng);
    out.split.assign(cfg.scenes, Split::Train);
    std::size_t n_train = cfg.scenes * 8 / 10;
    std::size_t n_val = cfg.scenes / 10;
    for (std::size_t i = 0; i < order.size(); ++i)
        out.split[order[i]] = i < n_train            ? Split::Train
                              : i < n_train + n_val  ? Split::Val
                                                     : Split::Test;

    // realized alpha per split and observation
    out.true_alpha.assign(3, std::vector<double>(n_obs, -1.0));
    std::vector<std::vector<std::size_t>> unlabeled(3, std::vector<std::size_t>(n_obs, 0));
    std::vector<std::vector<std::size_t>> hidden_pos(3, std::vector<std::size_t>(n_obs, 0));
    for (std::size_t i = 0; i < out.scenes.size(); ++i) {
        auto labels = report::derive_labels(out.scenes[i].matrix);
        auto sp = static_cast<std::size_t>(out.split[i]);
        for (std::size_t k = 0; k < n_obs; ++k) {
            if (labels.obs_labels[out.labels.observation_cols[k]] != Label3::Unlabeled) continue;
            ++unlabeled[sp][k];
            if (out.scenes[i].true_obs[k]) ++hidden_pos[sp][k];
        }
    }
    for (std::size_t sp = 0; sp < 3; ++sp)
        for (std::size_t k = 0; k < n_obs; ++k)
            if (unlabeled[sp][k] > 0)
                out.true_alpha[sp][k] = static_cast<double>(hidden_pos[sp][k]) /
                                        static_cast<double>(unlabeled[sp][k]);
    return out;
}

}  // namespace agx::harness
