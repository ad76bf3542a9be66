#pragma once
// CAM-to-box localization metrics: quantile thresholding, connected
// components, tight bounding boxes, IoU matching with recall/precision, and
// ranking metrics (AUPRC, AUROC).

#include <algorithm>
#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "agx/error.hpp"
#include "agx/tensor.hpp"

namespace agx::loc {

// Half-open pixel box [x_min, x_max) x [y_min, y_max). x indexes columns.
struct BBox {
    int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    bool valid() const { return x_min < x_max && y_min < y_max; }
    std::int64_t area() const {
        return static_cast<std::int64_t>(x_max - x_min) * static_cast<std::int64_t>(y_max - y_min);
    }
    bool operator==(const BBox&) const = default;
};

struct EvalConfig {
    double quantile = 0.95;
    int connectivity = 8;  // 4 or 8
    std::vector<double> iou_thresholds = {0.1, 0.25, 0.5};
};

// Linear-interpolation quantile over all values: h = (n-1)q, between sorted
// neighbours.
inline double quantile_value(const std::vector<double>& values, double q) {
    if (values.empty()) throw Error("quantile: empty value set");
    if (q <= 0.0 || q >= 1.0) throw Error("quantile: q must lie in (0,1)");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    double h = q * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(h);
    double frac = h - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

using Mask = std::vector<std::uint8_t>;  // row-major over the map grid

// mask(p) = 1 iff cam(p) strictly exceeds the q-quantile of all cam values.
inline Mask quantile_threshold(const Tensor& cam, double q) {
    if (cam.rank() != 2) throw Error("quantile_threshold: expected a 2-d map");
    double cut = quantile_value(cam.raw(), q);
    Mask mask(cam.size(), 0);
    for (std::size_t i = 0; i < cam.size(); ++i) mask[i] = cam[i] > cut ? 1 : 0;
    return mask;
}

using Region = std::vector<std::size_t>;  // flat pixel indices, sorted

// Maximal connected regions of set pixels under 4- or 8-connectivity,
// discovered in row-major order.
inline std::vector<Region> connected_components(const Mask& mask, std::size_t h, std::size_t w,
                                                int connectivity = 8) {
    if (mask.size() != h * w) throw Error("connected_components: mask size mismatch");
    if (connectivity != 4 && connectivity != 8)
        throw Error("connected_components: connectivity must be 4 or 8");
    std::vector<Region> regions;
    std::vector<std::uint8_t> visited(mask.size(), 0);
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask[start] || visited[start]) continue;
        Region region;
        std::deque<std::size_t> queue{start};
        visited[start] = 1;
        while (!queue.empty()) {
            std::size_t p = queue.front();
            queue.pop_front();
            region.push_back(p);
            std::size_t r = p / w, c = p % w;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    if (connectivity == 4 && dr != 0 && dc != 0) continue;
                    std::int64_t nr = static_cast<std::int64_t>(r) + dr;
                    std::int64_t nc = static_cast<std::int64_t>(c) + dc;
                    if (nr < 0 || nc < 0 || nr >= static_cast<std::int64_t>(h) ||
                        nc >= static_cast<std::int64_t>(w))
                        continue;
                    std::size_t np = static_cast<std::size_t>(nr) * w + static_cast<std::size_t>(nc);
                    if (mask[np] && !visited[np]) {
                        visited[np] = 1;
                        queue.push_back(np);
                    }
                }
        }
        std::sort(region.begin(), region.end());
        regions.push_back(std::move(region));
    }
    return regions;
}

// Tight axis-aligned hull of each region, in component order.
inline std::vector<BBox> regions_to_boxes(const std::vector<Region>& regions, std::size_t w) {
    std::vector<BBox> boxes;
    for (const auto& region : regions) {
        if (region.empty()) continue;
        int r0 = static_cast<int>(region.front() / w), c0 = static_cast<int>(region.front() % w);
        BBox b{c0, r0, c0 + 1, r0 + 1};
        for (std::size_t p : region) {
            int r = static_cast<int>(p / w), c = static_cast<int>(p % w);
            b.x_min = std::min(b.x_min, c);
            b.x_max = std::max(b.x_max, c + 1);
            b.y_min = std::min(b.y_min, r);
            b.y_max = std::max(b.y_max, r + 1);
        }
        boxes.push_back(b);
    }
    return boxes;
}

inline std::vector<BBox> cam_to_boxes(const Tensor& cam, const EvalConfig& cfg) {
    Mask mask = quantile_threshold(cam, cfg.quantile);
    auto regions = connected_components(mask, cam.dim(0), cam.dim(1), cfg.connectivity);
    return regions_to_boxes(regions, cam.dim(1));
}

inline double iou(const BBox& a, const BBox& b) {
    if (!a.valid() || !b.valid()) throw Error("iou: invalid box");
    std::int64_t ix = std::max(0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    std::int64_t iy = std::max(0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    std::int64_t inter = ix * iy;
    std::int64_t uni = a.area() + b.area() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Matching protocol: a generated box is a true positive iff IoU >= T with any
// ground-truth box; a ground-truth box is covered iff some generated box
// clears T against it. No one-to-one assignment. The comparison is inclusive
// so that exact-match boxes count at T = 1.
struct MatchCounts {
    std::size_t gt_total = 0;
    std::size_t pred_total = 0;
    std::size_t true_positive_preds = 0;
    std::size_t covered_gt = 0;

    std::optional<double> recall() const {
        if (gt_total == 0) return std::nullopt;
        return static_cast<double>(covered_gt) / static_cast<double>(gt_total);
    }
    std::optional<double> precision() const {
        if (pred_total == 0) return std::nullopt;
        return static_cast<double>(true_positive_preds) / static_cast<double>(pred_total);
    }

    MatchCounts& operator+=(const MatchCounts& o) {
        gt_total += o.gt_total;
        pred_total += o.pred_total;
        true_positive_preds += o.true_positive_preds;
        covered_gt += o.covered_gt;
        return *this;
    }
};

inline MatchCounts match_and_score(const std::vector<BBox>& pred_boxes,
                                   const std::vector<BBox>& gt_boxes, double threshold) {
    if (threshold <= 0.0 || threshold > 1.0) throw Error("match_and_score: T must lie in (0,1]");
    MatchCounts counts;
    counts.gt_total = gt_boxes.size();
    counts.pred_total = pred_boxes.size();
    for (const auto& p : pred_boxes)
        for (const auto& g : gt_boxes)
            if (iou(p, g) >= threshold) {
                ++counts.true_positive_preds;
                break;
            }
    for (const auto& g : gt_boxes)
        for (const auto& p : pred_boxes)
            if (iou(p, g) >= threshold) {
                ++counts.covered_gt;
                break;
            }
    return counts;
}

// ---------------------------------------------------------------------------
// ranking metrics
// ---------------------------------------------------------------------------

namespace rank_detail {

struct Tallies {
    std::size_t n_pos = 0, n_neg = 0;
    // (cumulative TP, cumulative FP) after each distinct score, descending.
    std::vector<std::pair<std::size_t, std::size_t>> steps;
};

inline Tallies tally(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    if (scores.size() != labels.size()) throw Error("ranking: size mismatch");
    if (scores.empty()) throw Error("ranking: empty input");
    Tallies t;
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    for (std::uint8_t l : labels) (l ? t.n_pos : t.n_neg)++;
    if (t.n_pos == 0 || t.n_neg == 0)
        throw Error("ranking: both classes must be present");
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < order.size()) {
        std::size_t j = i;  // group ties
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] ? tp : fp)++;
            ++j;
        }
        t.steps.push_back({tp, fp});
        i = j;
    }
    return t;
}

}  // namespace rank_detail

// Step interpolation over recall: AP = sum (R_i - R_{i-1}) * P_i over distinct
// score groups in descending order.
inline double auprc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    auto t = rank_detail::tally(scores, labels);
    double ap = 0.0, prev_recall = 0.0;
    for (auto [tp, fp] : t.steps) {
        double recall = static_cast<double>(tp) / static_cast<double>(t.n_pos);
        double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

// Trapezoidal area under the ROC curve with tie groups as single points.
inline double auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    auto t = rank_detail::tally(scores, labels);
    double area = 0.0, prev_tpr = 0.0, prev_fpr = 0.0;
    for (auto [tp, fp] : t.steps) {
        double tpr = static_cast<double>(tp) / static_cast<double>(t.n_pos);
        double fpr = static_cast<double>(fp) / static_cast<double>(t.n_neg);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    return area;
}

// ---------------------------------------------------------------------------
// resampling
// ---------------------------------------------------------------------------

// Bilinear upsampling with half-pixel centers; used to carry an S x S CAM to
// image resolution before thresholding.
inline Tensor upsample_bilinear(const Tensor& map, std::size_t out_h, std::size_t out_w) {
    if (map.rank() != 2) throw Error("upsample: expected a 2-d map");
    const std::size_t in_h = map.dim(0), in_w = map.dim(1);
    Tensor out({out_h, out_w});
    const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
    for (std::size_t i = 0; i < out_h; ++i) {
        double fy = (static_cast<double>(i) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(in_h - 1));
        std::size_t y0 = static_cast<std::size_t>(fy);
        std::size_t y1 = std::min(y0 + 1, in_h - 1);
        double wy = fy - static_cast<double>(y0);
        for (std::size_t j = 0; j < out_w; ++j) {
            double fx = (static_cast<double>(j) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(in_w - 1));
            std::size_t x0 = static_cast<std::size_t>(fx);
            std::size_t x1 = std::min(x0 + 1, in_w - 1);
            double wx = fx - static_cast<double>(x0);
            out.at(i, j) = (1.0 - wy) * ((1.0 - wx) * map.at(y0, x0) + wx * map.at(y0, x1)) +
                           wy * ((1.0 - wx) * map.at(y1, x0) + wx * map.at(y1, x1));
        }
    }
    return out;
}

}  // namespace agx::loc
