#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "zoomrl/geometry.hpp"
#include "zoomrl/reward.hpp"

namespace zoomrl {

// One task-model output in full-image coordinates.
struct Detection {
  BBox bbox;
  std::string category;
  double score = 1.0;
};

struct GroundTruth {
  BBox bbox;
  std::string category;
};

// Predictions and ground truth for one scene.
struct EvalInstance {
  std::vector<Detection> preds;
  std::vector<GroundTruth> gts;
};

// Greedy one-to-one matching: predictions in descending score order (ties by
// insertion order) each take the unmatched same-category ground truth with
// the highest IoU >= iou_thr (ties by lowest gt index). Returns, for every
// prediction in its original position, the matched gt index or -1.
inline std::vector<int> match_detections(std::span<const Detection> preds,
                                         std::span<const GroundTruth> gts, double iou_thr) {
  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return preds[a].score > preds[b].score; });

  std::vector<int> pred_to_gt(preds.size(), -1);
  std::vector<bool> gt_taken(gts.size(), false);
  for (int pi : order) {
    double best_iou = 0.0;
    int best_gt = -1;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (gt_taken[gi] || gts[gi].category != preds[pi].category) continue;
      const double v = iou(preds[pi].bbox, gts[gi].bbox);
      if (v >= iou_thr && v > best_iou) {
        best_iou = v;
        best_gt = static_cast<int>(gi);
      }
    }
    if (best_gt >= 0) {
      pred_to_gt[pi] = best_gt;
      gt_taken[best_gt] = true;
    }
  }
  return pred_to_gt;
}

namespace detail {

// COCO-style 101-point interpolated AP from a ranked TP/FP sequence.
inline double ap_101(const std::vector<char>& ranked_tp, std::int64_t total_gts) {
  if (total_gts <= 0) return 0.0;
  const std::size_t n = ranked_tp.size();
  std::vector<double> precision(n), recall(n);
  std::int64_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked_tp[i] ? 1 : 0;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(total_gts);
  }
  // precision envelope: best precision at this recall or beyond
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  std::size_t j = 0;
  for (int g = 0; g <= 100; ++g) {
    const double q = static_cast<double>(g) / 100.0;
    while (j < n && recall[j] < q) ++j;
    if (j < n) sum += precision[j];
  }
  return sum / 101.0;
}

inline std::vector<std::string> categories_of(std::span<const GroundTruth> gts) {
  std::vector<std::string> cats;
  for (const auto& g : gts) cats.push_back(g.category);
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  return cats;
}

}  // namespace detail

// AP (macro over ground-truth categories) and AR (matched gts / total gts)
// at one IoU threshold. With no ground truth the pair is degenerate:
// (1, 1) when there are also no predictions, (0, 0) otherwise.
inline std::pair<double, double> ap_ar_at(std::span<const Detection> preds,
                                          std::span<const GroundTruth> gts, double iou_thr) {
  if (gts.empty()) return preds.empty() ? std::pair{1.0, 1.0} : std::pair{0.0, 0.0};

  const std::vector<int> pred_to_gt = match_detections(preds, gts, iou_thr);
  const std::vector<std::string> cats = detail::categories_of(gts);

  double ap_sum = 0.0;
  for (const auto& cat : cats) {
    std::vector<int> order;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i].category == cat) order.push_back(static_cast<int>(i));
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return preds[a].score > preds[b].score; });
    std::vector<char> ranked_tp;
    ranked_tp.reserve(order.size());
    for (int i : order) ranked_tp.push_back(pred_to_gt[i] >= 0 ? 1 : 0);
    std::int64_t g = 0;
    for (const auto& gt : gts)
      if (gt.category == cat) ++g;
    ap_sum += detail::ap_101(ranked_tp, g);
  }
  const double ap = ap_sum / static_cast<double>(cats.size());

  std::int64_t matched = 0;
  for (int m : pred_to_gt)
    if (m >= 0) ++matched;
  const double ar = static_cast<double>(matched) / static_cast<double>(gts.size());
  return {ap, ar};
}

// Detection task reward: AP@0.5 + AR@0.5.
inline double r_detect(std::span<const Detection> preds, std::span<const GroundTruth> gts) {
  const auto [ap, ar] = ap_ar_at(preds, gts, 0.5);
  return ap + ar;
}

// Segmentation task reward: mask IoU between prediction and ground truth.
inline double r_seg(const BitMask& pred_mask, const BitMask& gt_mask) {
  return mask_iou(pred_mask, gt_mask);
}

// w_heuristic * heuristic total + w_task * task reward.
inline double combined_reward(const RewardBreakdown& heuristic, double task, double w_heuristic,
                              double w_task) {
  return w_heuristic * heuristic.heuristic_total + w_task * task;
}

// Within-category non-maximum suppression: keeps detections in descending
// score order (ties by insertion order), dropping any whose IoU with an
// already kept same-category detection exceeds iou_thr.
inline std::vector<Detection> nms(std::span<const Detection> dets, double iou_thr) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dets[a].score > dets[b].score; });
  std::vector<Detection> kept;
  for (int i : order) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.category == dets[i].category && iou(k.bbox, dets[i].bbox) > iou_thr) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(dets[i]);
  }
  return kept;
}

// Object-size partition in px^2: small < small_max, medium < medium_max,
// large otherwise.
struct SizeBuckets {
  double small_max = 32.0 * 32.0;
  double medium_max = 96.0 * 96.0;
};

struct EvalResult {
  std::vector<double> thresholds;
  std::vector<double> ap_by_threshold;
  std::vector<double> ar_by_threshold;
  double ap_small = 0.0, ap_medium = 0.0, ap_large = 0.0;
  double ar_small = 0.0, ar_medium = 0.0, ar_large = 0.0;
  double coco_ap = 0.0;
};

inline std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int i = 50; i <= 95; i += 5) t.push_back(static_cast<double>(i) / 100.0);
  return t;
}

namespace detail {

inline int bucket_of(double area, const SizeBuckets& b) {
  if (area < b.small_max) return 0;
  if (area < b.medium_max) return 1;
  return 2;
}

// Pooled evaluation at one threshold, optionally restricted to one size
// bucket (-1 = all sizes). Ground truths outside the bucket are ignored;
// predictions matched to ignored gts are dropped from the ranking, and
// unmatched predictions whose own area falls outside the bucket are dropped
// as well (they are not counted as false positives).
inline std::pair<double, double> pooled_ap_ar(std::span<const EvalInstance> instances,
                                              double iou_thr, int bucket,
                                              const SizeBuckets& buckets) {
  std::vector<std::string> cats;
  for (const auto& inst : instances)
    for (const auto& g : inst.gts) cats.push_back(g.category);
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());

  std::vector<std::vector<int>> matches;
  matches.reserve(instances.size());
  for (const auto& inst : instances)
    matches.push_back(match_detections(inst.preds, inst.gts, iou_thr));

  const auto gt_in_bucket = [&](const GroundTruth& g) {
    return bucket < 0 || bucket_of(static_cast<double>(g.bbox.area()), buckets) == bucket;
  };

  double ap_sum = 0.0;
  std::size_t cat_count = 0;
  std::int64_t matched_total = 0, gts_total = 0;
  for (const auto& cat : cats) {
    struct Entry {
      double score;
      std::size_t inst;
      int idx;
      char tp;
    };
    std::vector<Entry> pool;
    std::int64_t g_count = 0;
    for (std::size_t s = 0; s < instances.size(); ++s) {
      const auto& inst = instances[s];
      for (const auto& gt : inst.gts)
        if (gt.category == cat && gt_in_bucket(gt)) ++g_count;
      for (std::size_t i = 0; i < inst.preds.size(); ++i) {
        if (inst.preds[i].category != cat) continue;
        const int m = matches[s][i];
        if (m >= 0) {
          if (!gt_in_bucket(inst.gts[m])) continue;  // matched an ignored gt
          pool.push_back({inst.preds[i].score, s, static_cast<int>(i), 1});
        } else {
          if (bucket >= 0 &&
              bucket_of(static_cast<double>(inst.preds[i].bbox.area()), buckets) != bucket)
            continue;  // unmatched and outside the bucket
          pool.push_back({inst.preds[i].score, s, static_cast<int>(i), 0});
        }
      }
    }
    if (g_count == 0) continue;  // category absent from this bucket
    std::stable_sort(pool.begin(), pool.end(), [](const Entry& a, const Entry& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.inst != b.inst) return a.inst < b.inst;
      return a.idx < b.idx;
    });
    std::vector<char> ranked;
    ranked.reserve(pool.size());
    std::int64_t m_count = 0;
    for (const auto& e : pool) {
      ranked.push_back(e.tp);
      m_count += e.tp;
    }
    ap_sum += ap_101(ranked, g_count);
    ++cat_count;
    matched_total += m_count;
    gts_total += g_count;
  }
  if (cat_count == 0) return {0.0, 0.0};
  return {ap_sum / static_cast<double>(cat_count),
          static_cast<double>(matched_total) / static_cast<double>(gts_total)};
}

}  // namespace detail

// COCO-style evaluation over a batch of scenes: AP/AR per threshold in
// {0.50 .. 0.95 step 0.05}, size-bucketed AP/AR averaged over thresholds,
// and coco_ap as the arithmetic mean of the per-threshold APs.
inline EvalResult coco_eval(std::span<const EvalInstance> instances,
                            const SizeBuckets& buckets = {}) {
  EvalResult out;
  out.thresholds = coco_thresholds();
  double by_bucket_ap[3] = {0, 0, 0};
  double by_bucket_ar[3] = {0, 0, 0};
  for (double t : out.thresholds) {
    const auto [ap, ar] = detail::pooled_ap_ar(instances, t, -1, buckets);
    out.ap_by_threshold.push_back(ap);
    out.ar_by_threshold.push_back(ar);
    for (int b = 0; b < 3; ++b) {
      const auto [bap, bar] = detail::pooled_ap_ar(instances, t, b, buckets);
      by_bucket_ap[b] += bap;
      by_bucket_ar[b] += bar;
    }
  }
  const double n = static_cast<double>(out.thresholds.size());
  out.coco_ap = std::accumulate(out.ap_by_threshold.begin(), out.ap_by_threshold.end(), 0.0) / n;
  out.ap_small = by_bucket_ap[0] / n;
  out.ap_medium = by_bucket_ap[1] / n;
  out.ap_large = by_bucket_ap[2] / n;
  out.ar_small = by_bucket_ar[0] / n;
  out.ar_medium = by_bucket_ar[1] / n;
  out.ar_large = by_bucket_ar[2] / n;
  return out;
}

inline EvalResult coco_eval(std::span<const Detection> preds, std::span<const GroundTruth> gts,
                            const SizeBuckets& buckets = {}) {
  const EvalInstance inst{std::vector<Detection>(preds.begin(), preds.end()),
                          std::vector<GroundTruth>(gts.begin(), gts.end())};
  return coco_eval(std::span<const EvalInstance>(&inst, 1), buckets);
}

}  // namespace zoomrl
