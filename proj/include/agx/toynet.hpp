#pragma once
// Two-branch classifier: an anatomy network and an observation network, each
// a stack of stride-2 3x3 conv + ReLU layers followed by per-label linear
// heads on global-average-pooled features. Forward passes are built on the
// autodiff graph so training, CAMs and the residual-attention feedback path
// all share one implementation.

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "agx/autodiff.hpp"
#include "agx/error.hpp"
#include "agx/labels.hpp"
#include "agx/tensor.hpp"

namespace agx::net {

struct ConvLayer {
    Tensor w;  // 3 x 3 x Cin x Cout
    Tensor b;  // Cout
};

struct Encoder {
    std::vector<ConvLayer> layers;
};

// Encoder weights plus one weight vector of length C per label, no head bias.
struct ModelParams {
    Encoder anatomy_encoder;
    Encoder observation_encoder;
    std::vector<Tensor> anatomy_heads;
    std::vector<Tensor> observation_heads;

    std::size_t channels() const {
        if (anatomy_encoder.layers.empty()) throw Error("model: empty encoder");
        return anatomy_encoder.layers.back().w.dim(3);
    }
};

struct Arch {
    std::size_t conv_layers = 3;
    std::size_t channels = 8;
    std::size_t n_anatomy_labels = 0;
    std::size_t n_observation_labels = 0;
};

inline Encoder init_encoder(const Arch& arch, std::mt19937_64& rng) {
    Encoder enc;
    std::size_t cin = 1;
    for (std::size_t l = 0; l < arch.conv_layers; ++l) {
        std::size_t cout = arch.channels;
        ConvLayer layer{Tensor({3, 3, cin, cout}), Tensor({cout})};
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (9.0 * static_cast<double>(cin))));
        for (auto& v : layer.w.raw()) v = dist(rng);
        // small positive bias keeps ReLUs alive under momentum overshoot
        for (auto& v : layer.b.raw()) v = 0.05;
        enc.layers.push_back(std::move(layer));
        cin = cout;
    }
    return enc;
}

inline ModelParams init_params(const Arch& arch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ModelParams p;
    p.anatomy_encoder = init_encoder(arch, rng);
    p.observation_encoder = init_encoder(arch, rng);
    std::normal_distribution<double> head_dist(0.0, 0.1);
    for (std::size_t j = 0; j < arch.n_anatomy_labels; ++j) {
        Tensor h({arch.channels});
        for (auto& v : h.raw()) v = head_dist(rng);
        p.anatomy_heads.push_back(std::move(h));
    }
    for (std::size_t k = 0; k < arch.n_observation_labels; ++k) {
        Tensor h({arch.channels});
        for (auto& v : h.raw()) v = head_dist(rng);
        p.observation_heads.push_back(std::move(h));
    }
    return p;
}

// ---------------------------------------------------------------------------
// graph wrapping of parameters
// ---------------------------------------------------------------------------

// Autodiff handles for every parameter tensor, in a fixed order so gradients
// can be read back positionally after backward().
struct ParamNodes {
    std::vector<ad::Value> anat_conv_w, anat_conv_b, obs_conv_w, obs_conv_b;
    std::vector<ad::Value> anat_heads, obs_heads;

    std::vector<ad::Value*> all() {
        std::vector<ad::Value*> v;
        for (auto& n : anat_conv_w) v.push_back(&n);
        for (auto& n : anat_conv_b) v.push_back(&n);
        for (auto& n : obs_conv_w) v.push_back(&n);
        for (auto& n : obs_conv_b) v.push_back(&n);
        for (auto& n : anat_heads) v.push_back(&n);
        for (auto& n : obs_heads) v.push_back(&n);
        return v;
    }
};

inline ParamNodes wrap_params(const ModelParams& p, bool track_gradients = true) {
    auto lift = [&](const Tensor& t) { return track_gradients ? ad::param(t) : ad::constant(t); };
    ParamNodes n;
    for (const auto& l : p.anatomy_encoder.layers) {
        n.anat_conv_w.push_back(lift(l.w));
        n.anat_conv_b.push_back(lift(l.b));
    }
    for (const auto& l : p.observation_encoder.layers) {
        n.obs_conv_w.push_back(lift(l.w));
        n.obs_conv_b.push_back(lift(l.b));
    }
    for (const auto& h : p.anatomy_heads) n.anat_heads.push_back(lift(h));
    for (const auto& h : p.observation_heads) n.obs_heads.push_back(lift(h));
    return n;
}

// Reshape a 1 x H x W image to H x W x 1 (identical storage order).
inline Tensor image_as_hwc(const Tensor& x) {
    if (x.rank() != 3 || x.dim(0) != 1) throw Error("toynet: image must be 1 x H x W");
    return Tensor({x.dim(1), x.dim(2), 1}, x.raw());
}

inline ad::Value encode(const ad::Value& img_hwc, const std::vector<ad::Value>& conv_w,
                        const std::vector<ad::Value>& conv_b) {
    ad::Value f = img_hwc;
    for (std::size_t l = 0; l < conv_w.size(); ++l)
        f = ad::relu(ad::conv3x3s2(f, conv_w[l], conv_b[l]));
    return f;
}

// ---------------------------------------------------------------------------
// spec-level forward operations (values only)
// ---------------------------------------------------------------------------

struct AnatomyForward {
    Tensor f_a;                 // S x S x C
    std::vector<double> probs;  // per anatomy label
};

inline AnatomyForward forward_anatomy(const Tensor& x, const ModelParams& params) {
    auto nodes = wrap_params(params, false);
    auto f = encode(ad::constant(image_as_hwc(x)), nodes.anat_conv_w, nodes.anat_conv_b);
    auto pooled = ad::gap(f);
    AnatomyForward out;
    out.f_a = f->val;
    for (const auto& head : nodes.anat_heads)
        out.probs.push_back(ad::sigmoid_scalar(ad::scalar(ad::dot(head, pooled))));
    return out;
}

inline Tensor compute_cam(const Tensor& f, const Tensor& head) {
    return ad::cam(ad::constant(f), ad::constant(head))->val;
}

struct ObservationForward {
    Tensor f_o;       // S x S x C
    Tensor f_prime;   // (1 + beta*H) ⊙ f_o
    std::vector<double> probs;
};

// The spec-level observation pass applies a single attention map H to all
// labels; training builds a per-label H^k directly on the graph instead.
inline ObservationForward forward_observation(const Tensor& x, const Tensor& H, double beta,
                                              const ModelParams& params) {
    auto nodes = wrap_params(params, false);
    auto f_o = encode(ad::constant(image_as_hwc(x)), nodes.obs_conv_w, nodes.obs_conv_b);
    auto f_prime = ad::residual_gate(f_o, ad::constant(H), beta);
    auto pooled = ad::gap(f_prime);
    ObservationForward out;
    out.f_o = f_o->val;
    out.f_prime = f_prime->val;
    for (const auto& head : nodes.obs_heads)
        out.probs.push_back(ad::sigmoid_scalar(ad::scalar(ad::dot(head, pooled))));
    return out;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

inline constexpr double kProbEps = 1e-12;

// Per-label balancing factors. Convention: b+ = |N|/(|P|+|N|), b- = |P|/(|P|+|N|),
// so b+*|P| == b-*|N|. Degenerate counts fall back to 1.
struct LossWeights {
    double b_plus = 1.0;
    double b_minus = 1.0;

    static LossWeights from_counts(std::size_t n_pos, std::size_t n_neg) {
        if (n_pos == 0 || n_neg == 0) return {1.0, 1.0};
        double total = static_cast<double>(n_pos + n_neg);
        return {static_cast<double>(n_neg) / total, static_cast<double>(n_pos) / total};
    }
};

// Weighted BCE over a set of samples for one label. Unlabeled counts as
// negative here; PU relabeling shrinks the negative set upstream.
inline double weighted_bce(const std::vector<double>& probs, const std::vector<Label3>& labels,
                           const LossWeights& w) {
    if (probs.size() != labels.size()) throw Error("weighted_bce: size mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        double p = std::clamp(probs[i], kProbEps, 1.0 - kProbEps);
        if (labels[i] == Label3::Positive)
            loss -= w.b_plus * std::log(p);
        else
            loss -= w.b_minus * std::log(1.0 - p);
    }
    return loss;
}

// Graph version of one BCE term; summed per label by the training loop.
inline ad::Value bce_term(const ad::Value& prob, Label3 label, const LossWeights& w) {
    if (label == Label3::Positive) return ad::scale(ad::neg_log(prob, kProbEps), w.b_plus);
    return ad::scale(ad::neg_log1m(prob, kProbEps), w.b_minus);
}

// (1/N_a) sum L_a + (1/N_o) sum L_o.
inline double joint_loss(const std::vector<double>& anat_losses,
                         const std::vector<double>& obs_losses) {
    if (anat_losses.empty() || obs_losses.empty()) throw Error("joint_loss: empty loss list");
    double a = 0.0, o = 0.0;
    for (double v : anat_losses) a += v;
    for (double v : obs_losses) o += v;
    return a / static_cast<double>(anat_losses.size()) + o / static_cast<double>(obs_losses.size());
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

// Classic momentum SGD with L2 weight decay added to the gradient:
//   v <- momentum * v + (g + wd * p);  p <- p - lr * v
struct SgdState {
    std::vector<Tensor> velocity;  // aligned with the parameter order of ParamNodes::all()
};

inline void sgd_step(std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
                     SgdState& state, double lr, double momentum = 0.9,
                     double weight_decay = 1e-4) {
    if (params.size() != grads.size()) throw Error("sgd_step: param/grad count mismatch");
    if (state.velocity.empty())
        for (const Tensor* p : params) state.velocity.push_back(Tensor::zeros_like(*p));
    if (state.velocity.size() != params.size()) throw Error("sgd_step: stale optimizer state");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        Tensor& v = state.velocity[i];
        if (!p.same_shape(g)) throw Error("sgd_step: gradient shape mismatch");
        for (std::size_t k = 0; k < p.size(); ++k) {
            double gk = g[k] + weight_decay * p[k];
            v[k] = momentum * v[k] + gk;
            p[k] -= lr * v[k];
        }
    }
}

// Flat pointer list over all parameter tensors, ordered as ParamNodes::all().
inline std::vector<Tensor*> param_tensors(ModelParams& p) {
    std::vector<Tensor*> v;
    for (auto& l : p.anatomy_encoder.layers) v.push_back(&l.w);
    for (auto& l : p.anatomy_encoder.layers) v.push_back(&l.b);
    for (auto& l : p.observation_encoder.layers) v.push_back(&l.w);
    for (auto& l : p.observation_encoder.layers) v.push_back(&l.b);
    for (auto& h : p.anatomy_heads) v.push_back(&h);
    for (auto& h : p.observation_heads) v.push_back(&h);
    return v;
}

}  // namespace agx::net
