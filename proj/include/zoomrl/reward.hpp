#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "zoomrl/geometry.hpp"

namespace zoomrl {

// Thresholds and weights for the four heuristic reward components.
struct HeuristicConfig {
  double tau = 0.3;     // max pairwise IoU between proposals
  double r_min = 0.01;  // area-ratio lower bound
  double r_max = 0.5;   // area-ratio upper bound
  double theta = 0.5;   // mask-density threshold for box coverage
  double delta = 0.5;   // IoU threshold for matching a ground-truth box
  std::array<double, 4> lambda{1.0, 1.0, 1.0, 1.0};  // format, no-overlap, area, coverage
  bool coverage_use_dice = true;  // mask-to-mask mode metric
  // Convex combination over available coverage modes (mask, gt-box,
  // mask-to-mask). Unset = put weight 1 on the single applicable mode,
  // preferring mask-to-mask, then mask density, then gt boxes.
  std::optional<std::array<double, 3>> coverage_weights;

  void check() const {
    if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("HeuristicConfig: tau");
    if (!(r_min > 0.0 && r_min < r_max && r_max <= 1.0))
      throw std::invalid_argument("HeuristicConfig: area bounds");
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("HeuristicConfig: theta");
    if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("HeuristicConfig: delta");
    for (double l : lambda)
      if (l < 0.0) throw std::invalid_argument("HeuristicConfig: negative lambda");
  }
};

// Per-component reward values for one response, plus the combined scalar
// that feeds the policy update.
struct RewardBreakdown {
  double r_format = 0.0;
  double r_no_overlap = 0.0;
  double r_area = 0.0;
  double r_coverage = 0.0;
  double r_task = 0.0;
  double heuristic_total = 0.0;  // lambda-weighted sum of the four components
  double total = 0.0;            // w_heuristic * heuristic_total + w_task * r_task
};

// 1 iff the response parsed and its proposals validated.
inline double r_format(bool parse_and_validate_ok) { return parse_and_validate_ok ? 1.0 : 0.0; }

// 1 iff every distinct pair of boxes has IoU <= tau. Vacuously 1 for zero
// or one box.
inline double r_no_overlap(std::span<const BBox> boxes, double tau) {
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (std::size_t j = i + 1; j < boxes.size(); ++j)
      if (iou(boxes[i], boxes[j]) > tau) return 0.0;
  return 1.0;
}

// 1 iff every box's area ratio lies in [r_min, r_max].
inline double r_area(std::span<const BBox> boxes, int frame_w, int frame_h, double r_min,
                     double r_max) {
  for (const BBox& b : boxes) {
    const double r = area_ratio(b, frame_w, frame_h);
    if (r < r_min || r > r_max) return 0.0;
  }
  return 1.0;
}

// Fraction of boxes whose ground-truth mask density reaches theta.
// An empty box list scores 0: no proposals cover nothing.
inline double r_coverage_mask(std::span<const BBox> boxes, const BitMask& gt_mask, double theta) {
  if (boxes.empty()) return 0.0;
  std::size_t hit = 0;
  for (const BBox& b : boxes)
    if (mask_density_in_box(b, gt_mask) >= theta) ++hit;
  return static_cast<double>(hit) / static_cast<double>(boxes.size());
}

// Fraction of ground-truth boxes matched by at least one proposal at
// IoU >= delta. No ground truth means nothing to cover: 1.
inline double r_coverage_gtbox(std::span<const BBox> boxes, std::span<const BBox> gt_boxes,
                               double delta) {
  if (gt_boxes.empty()) return 1.0;
  if (boxes.empty()) return 0.0;
  std::size_t matched = 0;
  for (const BBox& gt : gt_boxes) {
    for (const BBox& b : boxes) {
      if (iou(b, gt) >= delta) {
        ++matched;
        break;
      }
    }
  }
  return static_cast<double>(matched) / static_cast<double>(gt_boxes.size());
}

// Dice or IoU between predicted and ground-truth masks.
inline double r_coverage_maskmask(const BitMask& pred_mask, const BitMask& gt_mask,
                                  bool use_dice) {
  return use_dice ? mask_dice(pred_mask, gt_mask) : mask_iou(pred_mask, gt_mask);
}

// Everything the heuristic reward can see for one episode. Null members
// simply disable the corresponding coverage mode.
struct HeuristicInputs {
  bool format_ok = false;
  std::span<const BBox> boxes;  // validated proposals; empty when format failed
  int frame_w = 0;
  int frame_h = 0;
  const BitMask* gt_mask = nullptr;
  std::span<const BBox> gt_boxes;
  bool has_gt_boxes = false;  // distinguishes "no annotation" from "zero boxes"
  const BitMask* pred_mask = nullptr;
};

namespace detail {

inline double coverage_component(const HeuristicInputs& in, const HeuristicConfig& cfg) {
  const bool can_maskmask = in.pred_mask != nullptr && in.gt_mask != nullptr;
  const bool can_mask = in.gt_mask != nullptr;
  const bool can_gtbox = in.has_gt_boxes;
  if (cfg.coverage_weights) {
    const auto& w = *cfg.coverage_weights;
    double num = 0.0, den = 0.0;
    if (can_mask && w[0] > 0.0) {
      num += w[0] * r_coverage_mask(in.boxes, *in.gt_mask, cfg.theta);
      den += w[0];
    }
    if (can_gtbox && w[1] > 0.0) {
      num += w[1] * r_coverage_gtbox(in.boxes, in.gt_boxes, cfg.delta);
      den += w[1];
    }
    if (can_maskmask && w[2] > 0.0) {
      num += w[2] * r_coverage_maskmask(*in.pred_mask, *in.gt_mask, cfg.coverage_use_dice);
      den += w[2];
    }
    return den > 0.0 ? num / den : 1.0;
  }
  if (can_maskmask) return r_coverage_maskmask(*in.pred_mask, *in.gt_mask, cfg.coverage_use_dice);
  if (can_mask) return r_coverage_mask(in.boxes, *in.gt_mask, cfg.theta);
  return r_coverage_gtbox(in.boxes, in.gt_boxes, cfg.delta);
}

}  // namespace detail

// The lambda-weighted heuristic reward. A format failure zeroes every
// spatial component as well: the episode still gets a finite reward.
inline RewardBreakdown heuristic_total(const HeuristicInputs& in, const HeuristicConfig& cfg) {
  cfg.check();
  RewardBreakdown out;
  out.r_format = r_format(in.format_ok);
  if (in.format_ok) {
    out.r_no_overlap = r_no_overlap(in.boxes, cfg.tau);
    out.r_area = r_area(in.boxes, in.frame_w, in.frame_h, cfg.r_min, cfg.r_max);
    out.r_coverage = detail::coverage_component(in, cfg);
  }
  out.heuristic_total = cfg.lambda[0] * out.r_format + cfg.lambda[1] * out.r_no_overlap +
                        cfg.lambda[2] * out.r_area + cfg.lambda[3] * out.r_coverage;
  out.total = out.heuristic_total;
  return out;
}

}  // namespace zoomrl
