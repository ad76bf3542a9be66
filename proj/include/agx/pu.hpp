#pragma once
// Positive-unlabeled learning: Best Bin Estimation of the positive mixture
// proportion alpha in unlabeled data, plus the iterative self-training loop
// (warm start -> estimate alpha on validation scores -> remove the top-alpha
// scored unlabeled training samples and relabel the rest as provisional
// negatives -> retrain; repeat until validation AUPRC stops improving).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "agx/error.hpp"

namespace agx::pu {

struct ScoreSets {
    std::vector<double> z_p;  // validation positives
    std::vector<double> z_n;  // validation negatives (unused by BBE, kept for diagnostics)
    std::vector<double> z_u;  // validation unlabeled
};

// Right-continuous empirical CDF.
class EmpiricalCdf {
public:
    explicit EmpiricalCdf(std::vector<double> samples) : sorted_(std::move(samples)) {
        if (sorted_.empty()) throw Error("ecdf: empty sample set");
        std::sort(sorted_.begin(), sorted_.end());
    }

    // Fraction of samples <= z.
    double query(double z) const {
        auto it = std::upper_bound(sorted_.begin(), sorted_.end(), z);
        return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
    }

    std::size_t n() const { return sorted_.size(); }
    const std::vector<double>& sorted() const { return sorted_; }

private:
    std::vector<double> sorted_;
};

struct PuEstimate {
    double alpha = 0.0;
    double best_bin_threshold = 0.0;
    std::vector<std::pair<double, double>> ucb_curve;  // (threshold, UCB)
};

// DKW-style confidence width.
inline double confidence_width(double delta, std::size_t n) {
    return std::sqrt(std::log(4.0 / delta) / (2.0 * static_cast<double>(n)));
}

// Minimize UCB(z) = (q_u(z) + c(delta, n_u)) / max(q_p(z) - c(delta, n_p), gamma)
// over candidate thresholds (every distinct score value), where q(z) = 1 - F(z)
// is the upper-tail mass. Ties pick the smallest threshold; alpha is the
// clamped tail ratio at the winner.
inline PuEstimate bbe_estimate(const ScoreSets& scores, double delta = 0.1, double gamma = 0.01) {
    if (scores.z_p.empty() || scores.z_u.empty())
        throw Error("bbe: z_p and z_u must be nonempty");
    EmpiricalCdf f_p(scores.z_p), f_u(scores.z_u);

    std::vector<double> candidates;
    candidates.reserve(scores.z_p.size() + scores.z_u.size());
    candidates.insert(candidates.end(), scores.z_p.begin(), scores.z_p.end());
    candidates.insert(candidates.end(), scores.z_u.begin(), scores.z_u.end());
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    const double c_p = confidence_width(delta, f_p.n());
    const double c_u = confidence_width(delta, f_u.n());

    PuEstimate est;
    double best_ucb = std::numeric_limits<double>::infinity();
    for (double z : candidates) {
        double q_p = 1.0 - f_p.query(z);
        double q_u = 1.0 - f_u.query(z);
        double ucb = (q_u + c_u) / std::max(q_p - c_p, gamma);
        est.ucb_curve.push_back({z, ucb});
        if (ucb < best_ucb) {  // strict: ties keep the smallest threshold
            best_ucb = ucb;
            est.best_bin_threshold = z;
            est.alpha = q_p > 0.0 ? std::clamp(q_u / q_p, 0.0, 1.0) : 1.0;
        }
    }
    return est;
}

// Remove the ceil(alpha*|U|) highest-scored unlabeled samples; the remainder
// become provisional negatives. Ties break on sample id for determinism.
struct RelabelResult {
    std::set<std::string> removed;
    std::set<std::string> provisional_negatives;
};

inline RelabelResult rank_and_relabel(
    const std::vector<std::pair<std::string, double>>& unlabeled_train_scores, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw Error("rank_and_relabel: alpha must lie in [0,1]");
    std::vector<std::pair<std::string, double>> ranked = unlabeled_train_scores;
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::size_t k = static_cast<std::size_t>(
        std::ceil(alpha * static_cast<double>(ranked.size())));
    k = std::min(k, ranked.size());
    RelabelResult out;
    for (std::size_t i = 0; i < ranked.size(); ++i)
        (i < k ? out.removed : out.provisional_negatives).insert(ranked[i].first);
    return out;
}

// ---------------------------------------------------------------------------
// self-training loop
// ---------------------------------------------------------------------------

struct SelfTrainConfig {
    double delta = 0.1;
    double gamma = 0.01;
    std::size_t patience = 2;
    std::size_t max_iterations = 5;
};

struct LabelIteration {
    std::string label;
    std::optional<PuEstimate> estimate;  // absent when estimation was skipped
    std::size_t removed = 0;
    std::size_t provisional_negatives = 0;
};

struct SelfTrainIteration {
    std::size_t iteration = 0;  // 0 = warm start
    std::vector<LabelIteration> labels;
    double validation_auprc = 0.0;
};

struct SelfTrainLog {
    std::vector<SelfTrainIteration> iterations;
    std::size_t best_iteration = 0;
    double warm_start_auprc = 0.0;
    double best_auprc = 0.0;
    std::vector<std::string> warnings;
};

// Hooks supplied by the training harness. The loop owns iteration order,
// alpha freezing, patience-based stopping and best-model bookkeeping; the
// harness owns the model, data and metric computation.
struct SelfTrainHooks {
    // Train (or continue training) with the current per-label removal sets.
    std::function<void(const std::map<std::string, std::set<std::string>>& removed, bool warm_start)>
        train;
    // Validation scores for one label.
    std::function<ScoreSets(const std::string& label)> validation_scores;
    // Unlabeled *training* samples with current scores for one label.
    std::function<std::vector<std::pair<std::string, double>>(const std::string& label)>
        unlabeled_train_scores;
    // Mean validation AUPRC over evaluable labels (the stopping metric).
    std::function<double()> validation_auprc;
    // Snapshot / restore of the best model.
    std::function<void()> snapshot_best;
    std::function<void()> restore_best;
};

inline SelfTrainLog self_train(const std::vector<std::string>& labels, const SelfTrainHooks& hooks,
                               const SelfTrainConfig& cfg) {
    SelfTrainLog log;

    // (1) warm start: every unlabeled sample is treated as negative.
    hooks.train({}, true);
    SelfTrainIteration warm;
    warm.iteration = 0;
    warm.validation_auprc = hooks.validation_auprc();
    log.iterations.push_back(warm);
    log.warm_start_auprc = warm.validation_auprc;
    log.best_auprc = warm.validation_auprc;
    log.best_iteration = 0;
    hooks.snapshot_best();

    std::size_t since_best = 0;
    for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
        SelfTrainIteration entry;
        entry.iteration = it;

        // (2) estimate alpha per label on validation scores; (3) relabel the
        // unlabeled training pool with the frozen alpha.
        std::map<std::string, std::set<std::string>> removed;
        for (const auto& label : labels) {
            LabelIteration li;
            li.label = label;
            ScoreSets scores = hooks.validation_scores(label);
            if (scores.z_p.empty() || scores.z_u.empty()) {
                log.warnings.push_back("label '" + label +
                                       "': no validation positives or unlabeled; estimation skipped");
                entry.labels.push_back(std::move(li));
                continue;
            }
            PuEstimate est = bbe_estimate(scores, cfg.delta, cfg.gamma);
            auto relabeled = rank_and_relabel(hooks.unlabeled_train_scores(label), est.alpha);
            li.estimate = est;
            li.removed = relabeled.removed.size();
            li.provisional_negatives = relabeled.provisional_negatives.size();
            removed[label] = std::move(relabeled.removed);
            entry.labels.push_back(std::move(li));
        }

        // (4) update the model on |P| positives and |N| + (1-alpha)|U| negatives.
        hooks.train(removed, false);
        entry.validation_auprc = hooks.validation_auprc();
        log.iterations.push_back(std::move(entry));

        if (log.iterations.back().validation_auprc > log.best_auprc) {
            log.best_auprc = log.iterations.back().validation_auprc;
            log.best_iteration = it;
            since_best = 0;
            hooks.snapshot_best();
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }

    hooks.restore_best();
    return log;
}

}  // namespace agx::pu
