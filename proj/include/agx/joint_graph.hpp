#pragma once
// Joint loss over a batch for the two-branch classifier. Builds one autodiff
// graph covering the anatomy BCE terms, the per-observation residual-attention
// path (H^k aggregated from this sample's adjacency matrix), and the
// observation BCE terms, so backward() yields exact gradients including the
// feedback through H^k into the anatomy encoder and heads.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "agx/aga.hpp"
#include "agx/autodiff.hpp"
#include "agx/labels.hpp"
#include "agx/report_graph.hpp"
#include "agx/toynet.hpp"

namespace agx::net {

// Which vocabulary rows/columns the model trains on. Reserved rows/columns
// never appear here.
struct LabelSpace {
    std::vector<std::size_t> anatomy_rows;
    std::vector<std::size_t> observation_cols;
    std::vector<std::string> anatomy_tokens;
    std::vector<std::string> observation_tokens;

    std::size_t n_anatomy() const { return anatomy_rows.size(); }
    std::size_t n_observation() const { return observation_cols.size(); }

    static LabelSpace from_vocab(const report::Vocabulary& vocab) {
        LabelSpace ls;
        for (std::size_t j = 0; j < vocab.n_rows(); ++j) {
            if (vocab.is_reserved_row(j)) continue;
            ls.anatomy_rows.push_back(j);
            ls.anatomy_tokens.push_back(vocab.anatomy_tokens()[j]);
        }
        for (std::size_t k = 0; k < vocab.n_cols(); ++k) {
            if (vocab.is_reserved_col(k)) continue;
            ls.observation_cols.push_back(k);
            ls.observation_tokens.push_back(vocab.observation_tokens()[k]);
        }
        return ls;
    }
};

struct BatchItem {
    const Tensor* image = nullptr;                  // 1 x H x W
    const report::AdjacencyMatrix* matrix = nullptr;  // may be null (no attention)
    std::vector<Label3> obs_labels;                 // per trained observation label
    std::vector<std::uint8_t> anat_labels;          // per trained anatomy label, 0/1
    std::vector<std::uint8_t> obs_active;           // 0 = PU-removed for that label
};

struct JointGraph {
    ad::Value loss;
    ParamNodes params;
    double anat_branch = 0.0;  // (1/N_a) sum of anatomy losses
    double obs_branch = 0.0;   // (1/N_o) sum of observation losses
};

// beta < 0 is rejected; attention maps are only built when use_attention is
// set, the sample carries a matrix, and the column has contributing P rows.
inline JointGraph build_joint_loss(const std::vector<BatchItem>& batch, const ModelParams& model,
                                   const LabelSpace& labels, double beta, bool use_attention,
                                   const std::vector<LossWeights>& anat_weights,
                                   const std::vector<LossWeights>& obs_weights,
                                   bool track_gradients = true) {
    if (batch.empty()) throw Error("joint_loss: empty batch");
    if (beta < 0.0) throw Error("joint_loss: beta must be nonnegative");
    if (labels.n_anatomy() != model.anatomy_heads.size() ||
        labels.n_observation() != model.observation_heads.size())
        throw Error("joint_loss: label space does not match model heads");
    if (anat_weights.size() != labels.n_anatomy() || obs_weights.size() != labels.n_observation())
        throw Error("joint_loss: weight list size mismatch");

    JointGraph g;
    g.params = wrap_params(model, track_gradients);

    std::vector<std::vector<ad::Value>> anat_terms(labels.n_anatomy());
    std::vector<std::vector<ad::Value>> obs_terms(labels.n_observation());

    for (const auto& item : batch) {
        if (item.obs_labels.size() != labels.n_observation() ||
            item.anat_labels.size() != labels.n_anatomy())
            throw Error("joint_loss: item label vector size mismatch");
        auto img = ad::constant(image_as_hwc(*item.image));
        auto f_a = encode(img, g.params.anat_conv_w, g.params.anat_conv_b);
        auto f_o = encode(img, g.params.obs_conv_w, g.params.obs_conv_b);
        auto pooled_a = ad::gap(f_a);

        for (std::size_t j = 0; j < labels.n_anatomy(); ++j) {
            auto prob = ad::sigmoid(ad::dot(g.params.anat_heads[j], pooled_a));
            anat_terms[j].push_back(bce_term(
                prob, item.anat_labels[j] ? Label3::Positive : Label3::Negative, anat_weights[j]));
        }

        // Lazy per-row CAMs shared by every observation column of this sample.
        std::map<std::size_t, ad::Value> row_cams;
        auto cam_for_row = [&](std::size_t trained_j) {
            std::size_t vocab_row = labels.anatomy_rows[trained_j];
            auto it = row_cams.find(vocab_row);
            if (it == row_cams.end())
                it = row_cams.emplace(vocab_row, ad::cam(f_a, g.params.anat_heads[trained_j])).first;
            return it->second;
        };

        ad::Value pooled_o;  // shared when no attention applies
        for (std::size_t k = 0; k < labels.n_observation(); ++k) {
            if (!item.obs_active.empty() && !item.obs_active[k]) continue;

            std::vector<ad::Value> contributing;
            if (use_attention && item.matrix != nullptr) {
                std::size_t col = labels.observation_cols[k];
                for (std::size_t j = 0; j < labels.n_anatomy(); ++j) {
                    auto s = item.matrix->at(labels.anatomy_rows[j], col);
                    if (s && *s == report::RelationState::P) contributing.push_back(cam_for_row(j));
                }
            }

            ad::Value pooled;
            if (contributing.empty()) {
                if (!pooled_o) pooled_o = ad::gap(f_o);
                pooled = pooled_o;
            } else {
                auto h = ad::minmax_norm(contributing.size() == 1 ? contributing[0]
                                                                  : ad::add_n(contributing));
                pooled = ad::gap(ad::residual_gate(f_o, h, beta));
            }
            auto prob = ad::sigmoid(ad::dot(g.params.obs_heads[k], pooled));
            obs_terms[k].push_back(bce_term(prob, item.obs_labels[k], obs_weights[k]));
        }
    }

    auto branch_mean = [](std::vector<std::vector<ad::Value>>& per_label) {
        std::vector<ad::Value> label_sums;
        for (auto& terms : per_label) {
            if (terms.empty()) continue;
            label_sums.push_back(terms.size() == 1 ? terms[0] : ad::add_n(std::move(terms)));
        }
        if (label_sums.empty()) return ad::constant(Tensor::scalar(0.0));
        auto total = label_sums.size() == 1 ? label_sums[0] : ad::add_n(std::move(label_sums));
        return ad::scale(total, 1.0 / static_cast<double>(per_label.size()));
    };

    auto anat_branch = branch_mean(anat_terms);
    auto obs_branch = branch_mean(obs_terms);
    g.anat_branch = ad::scalar(anat_branch);
    g.obs_branch = ad::scalar(obs_branch);
    g.loss = ad::add(anat_branch, obs_branch);
    return g;
}

// ---------------------------------------------------------------------------
// inference pass (values only, H^k = 0)
// ---------------------------------------------------------------------------

struct InferenceOutput {
    Tensor f_a, f_o;                      // S x S x C feature maps
    std::vector<double> anat_probs;       // per trained anatomy label
    std::vector<double> obs_probs;        // per trained observation label
    std::vector<Tensor> anat_cams;        // CAM per trained anatomy label
    std::vector<Tensor> obs_cams;         // CAM per trained observation label
};

inline InferenceOutput infer(const Tensor& image, const ModelParams& model) {
    auto nodes = wrap_params(model, false);
    auto img = ad::constant(image_as_hwc(image));
    auto f_a = encode(img, nodes.anat_conv_w, nodes.anat_conv_b);
    auto f_o = encode(img, nodes.obs_conv_w, nodes.obs_conv_b);
    auto pooled_a = ad::gap(f_a);
    auto pooled_o = ad::gap(f_o);  // H^k = 0 at test time: f' == f_o

    InferenceOutput out;
    out.f_a = f_a->val;
    out.f_o = f_o->val;
    for (const auto& head : nodes.anat_heads) {
        out.anat_probs.push_back(ad::sigmoid_scalar(ad::scalar(ad::dot(head, pooled_a))));
        out.anat_cams.push_back(ad::cam(f_a, head)->val);
    }
    for (const auto& head : nodes.obs_heads) {
        out.obs_probs.push_back(ad::sigmoid_scalar(ad::scalar(ad::dot(head, pooled_o))));
        out.obs_cams.push_back(ad::cam(f_o, head)->val);
    }
    return out;
}

}  // namespace agx::net
