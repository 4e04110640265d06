#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "zoomrl/environment.hpp"
#include "zoomrl/geometry.hpp"
#include "zoomrl/rng.hpp"
#include "zoomrl/scene.hpp"

namespace zoomrl {

// What a sensing policy emits for one episode: an ordered proposal list in
// full-image coordinates, the log-probability of that ordered selection
// (0 for deterministic policies), and the raw response text when the policy
// talks through the prompt protocol.
struct PolicyOutput {
  std::vector<BBox> proposals;
  double log_prob = 0.0;
  std::string raw_text;
};

// Inputs a policy may look at. Baselines ignore most of it; the oracle reads
// ground truth; segmentation policies get the current predicted mask.
struct PolicyContext {
  const Scene* scene = nullptr;
  Observation init_obs;
  const BitMask* pred_mask = nullptr;
  int k = 3;
};

class SensingPolicy {
 public:
  virtual ~SensingPolicy() = default;
  virtual PolicyOutput propose(const PolicyContext& ctx, Rng& rng) const = 0;
  virtual std::string name() const = 0;
};

inline constexpr double kDefaultAnchorScales[] = {0.5, 1.0 / 3.0, 0.25, 1.0 / 6.0};

// Multi-scale square windows over the frame: scales of the shorter side,
// stride of half a window, right/bottom flush windows included, exact
// duplicates removed, then filtered to the heuristic area-ratio band so
// every anchor is a legal proposal.
inline std::vector<BBox> build_anchor_grid(int frame_w, int frame_h,
                                           std::span<const double> scales = kDefaultAnchorScales,
                                           double r_min = 0.01, double r_max = 0.5) {
  if (frame_w <= 0 || frame_h <= 0) throw std::invalid_argument("build_anchor_grid: empty frame");
  const int shorter = std::min(frame_w, frame_h);
  std::vector<BBox> anchors;
  std::set<std::tuple<int, int, int, int>> seen;
  for (double scale : scales) {
    const int win = std::max(1, static_cast<int>(std::llround(shorter * scale)));
    const int ww = std::min(win, frame_w);
    const int wh = std::min(win, frame_h);
    const int stride = std::max(1, win / 2);
    std::vector<int> xs, ys;
    for (int x = 0;; x += stride) {
      if (x + ww >= frame_w) {
        xs.push_back(frame_w - ww);
        break;
      }
      xs.push_back(x);
    }
    for (int y = 0;; y += stride) {
      if (y + wh >= frame_h) {
        ys.push_back(frame_h - wh);
        break;
      }
      ys.push_back(y);
    }
    for (int y : ys)
      for (int x : xs) {
        const BBox b(x, y, x + ww - 1, y + wh - 1);
        const double r = area_ratio(b, frame_w, frame_h);
        if (r < r_min || r > r_max) continue;
        if (seen.insert({b.x1, b.y1, b.x2, b.y2}).second) anchors.push_back(b);
      }
  }
  return anchors;
}

namespace detail {

// Maps an anchor from its reference frame into another frame, preserving
// relative position and extent.
inline BBox rescale_box(const BBox& b, int from_w, int from_h, int to_w, int to_h) {
  if (from_w == to_w && from_h == to_h) return b;
  const double sx = static_cast<double>(to_w) / from_w;
  const double sy = static_cast<double>(to_h) / from_h;
  int x1 = static_cast<int>(std::llround(b.x1 * sx));
  int y1 = static_cast<int>(std::llround(b.y1 * sy));
  int x2 = static_cast<int>(std::llround((b.x2 + 1) * sx)) - 1;
  int y2 = static_cast<int>(std::llround((b.y2 + 1) * sy)) - 1;
  x1 = std::clamp(x1, 0, to_w - 1);
  y1 = std::clamp(y1, 0, to_h - 1);
  x2 = std::clamp(std::max(x2, x1), x1, to_w - 1);
  y2 = std::clamp(std::max(y2, y1), y1, to_h - 1);
  return BBox(x1, y1, x2, y2);
}

inline double logsumexp(std::span<const double> logits, std::span<const char> taken) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!taken[i]) m = std::max(m, logits[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!taken[i]) s += std::exp(logits[i] - m);
  return m + std::log(s);
}

}  // namespace detail

// Exact log-probability of an ordered selection under sequential softmax
// sampling without replacement (Plackett-Luce).
inline double plackett_luce_log_prob(std::span<const double> logits, std::span<const int> indices) {
  std::vector<char> taken(logits.size(), 0);
  double lp = 0.0;
  for (int idx : indices) {
    if (idx < 0 || idx >= static_cast<int>(logits.size()) || taken[idx])
      throw std::invalid_argument("plackett_luce_log_prob: bad selection");
    lp += logits[idx] - detail::logsumexp(logits, taken);
    taken[idx] = 1;
  }
  return lp;
}

// Analytic gradient of plackett_luce_log_prob with respect to every logit:
// per step, +1 on the chosen anchor and -softmax on each anchor still in
// the remaining set.
inline std::vector<double> plackett_luce_grad(std::span<const double> logits,
                                              std::span<const int> indices) {
  std::vector<char> taken(logits.size(), 0);
  std::vector<double> grad(logits.size(), 0.0);
  for (int idx : indices) {
    if (idx < 0 || idx >= static_cast<int>(logits.size()) || taken[idx])
      throw std::invalid_argument("plackett_luce_grad: bad selection");
    const double lse = detail::logsumexp(logits, taken);
    for (std::size_t j = 0; j < logits.size(); ++j)
      if (!taken[j]) grad[j] -= std::exp(logits[j] - lse);
    grad[idx] += 1.0;
    taken[idx] = 1;
  }
  return grad;
}

// Draws an ordered k-selection; returns indices and fills log_prob.
inline std::vector<int> plackett_luce_sample(std::span<const double> logits, int k, Rng& rng,
                                             double* log_prob) {
  if (k < 1 || k > static_cast<int>(logits.size()))
    throw std::invalid_argument("plackett_luce_sample: k out of range");
  std::vector<char> taken(logits.size(), 0);
  std::vector<int> out;
  double lp = 0.0;
  for (int step = 0; step < k; ++step) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i)
      if (!taken[i]) m = std::max(m, logits[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i)
      if (!taken[i]) total += std::exp(logits[i] - m);
    const double u = rng.uniform01() * total;
    double cum = 0.0;
    int chosen = -1;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (taken[i]) continue;
      cum += std::exp(logits[i] - m);
      if (u < cum) {
        chosen = static_cast<int>(i);
        break;
      }
    }
    if (chosen < 0) {  // numeric droop on the last candidate
      for (std::size_t i = logits.size(); i-- > 0;)
        if (!taken[i]) {
          chosen = static_cast<int>(i);
          break;
        }
    }
    lp += logits[chosen] - (m + std::log(total));
    taken[chosen] = 1;
    out.push_back(chosen);
  }
  if (log_prob) *log_prob = lp;
  return out;
}

// The trainable policy: a categorical parameter per anchor, sampled k at a
// time without replacement. Proposals keep the anchor order they were drawn
// in; the segmentation environment consumes them in that order. With
// greedy_eval set, propose() takes the k highest-logit anchors instead of
// sampling, which is how trained snapshots are deployed.
struct AnchorGridPolicy final : public SensingPolicy {
  std::vector<BBox> anchors;
  std::vector<double> logits;
  int ref_w = 0;
  int ref_h = 0;
  int k = 3;
  bool greedy_eval = false;

  static AnchorGridPolicy make(int frame_w, int frame_h, int k,
                               std::span<const double> scales = kDefaultAnchorScales,
                               double r_min = 0.01, double r_max = 0.5) {
    AnchorGridPolicy p;
    p.anchors = build_anchor_grid(frame_w, frame_h, scales, r_min, r_max);
    if (p.anchors.empty()) throw std::invalid_argument("AnchorGridPolicy: no anchors survive");
    if (k < 1 || k > static_cast<int>(p.anchors.size()))
      throw std::invalid_argument("AnchorGridPolicy: k out of range");
    p.logits.assign(p.anchors.size(), 0.0);
    p.ref_w = frame_w;
    p.ref_h = frame_h;
    p.k = k;
    return p;
  }

  int index_of(const BBox& b) const {
    for (std::size_t i = 0; i < anchors.size(); ++i)
      if (anchors[i] == b) return static_cast<int>(i);
    return -1;
  }

  std::vector<BBox> boxes_for(std::span<const int> indices, int frame_w, int frame_h) const {
    std::vector<BBox> out;
    out.reserve(indices.size());
    for (int i : indices)
      out.push_back(detail::rescale_box(anchors[i], ref_w, ref_h, frame_w, frame_h));
    return out;
  }

  std::vector<int> top_k_indices() const {
    std::vector<int> order(anchors.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return logits[a] > logits[b]; });
    order.resize(k);
    return order;
  }

  PolicyOutput propose(const PolicyContext& ctx, Rng& rng) const override {
    PolicyOutput out;
    std::vector<int> indices;
    if (greedy_eval) {
      indices = top_k_indices();
      out.log_prob = plackett_luce_log_prob(logits, indices);
    } else {
      indices = plackett_luce_sample(logits, k, rng, &out.log_prob);
    }
    out.proposals = boxes_for(indices, ctx.scene->width, ctx.scene->height);
    return out;
  }

  std::string name() const override { return "anchor-grid"; }
};

// Frozen copy of the policy parameters taken at trainer start.
struct ReferenceSnapshot {
  std::vector<double> logits;
};

// Ordered sample plus the anchor indices behind it (the trainer needs both).
struct AnchorSample {
  std::vector<int> indices;
  PolicyOutput output;
};

inline AnchorSample sample_k_detailed(const AnchorGridPolicy& policy, Rng& rng) {
  AnchorSample s;
  s.indices = plackett_luce_sample(policy.logits, policy.k, rng, &s.output.log_prob);
  s.output.proposals = policy.boxes_for(s.indices, policy.ref_w, policy.ref_h);
  return s;
}

inline PolicyOutput sample_k(const AnchorGridPolicy& policy, Rng& rng) {
  return sample_k_detailed(policy, rng).output;
}

// Resolves proposals back to anchor indices; a proposal that is not an
// anchor of this policy is a domain error.
inline std::vector<int> anchor_indices_of(const AnchorGridPolicy& policy,
                                          std::span<const BBox> proposals) {
  std::vector<int> indices;
  indices.reserve(proposals.size());
  for (const BBox& b : proposals) {
    const int i = policy.index_of(b);
    if (i < 0) throw std::invalid_argument("anchor_indices_of: proposal is not an anchor");
    indices.push_back(i);
  }
  return indices;
}

inline double log_prob_of(const AnchorGridPolicy& policy, std::span<const BBox> proposals) {
  return plackett_luce_log_prob(policy.logits, anchor_indices_of(policy, proposals));
}

inline std::vector<double> grad_log_prob(const AnchorGridPolicy& policy,
                                         std::span<const BBox> proposals) {
  return plackett_luce_grad(policy.logits, anchor_indices_of(policy, proposals));
}

// Uniform sampling without replacement over the anchor set.
struct RandomPolicy final : public SensingPolicy {
  int k = 3;

  explicit RandomPolicy(int k_ = 3) : k(k_) {}

  PolicyOutput propose(const PolicyContext& ctx, Rng& rng) const override {
    const auto anchors = build_anchor_grid(ctx.scene->width, ctx.scene->height);
    if (k > static_cast<int>(anchors.size()))
      throw std::invalid_argument("RandomPolicy: k exceeds anchor count");
    std::vector<int> pool(anchors.size());
    std::iota(pool.begin(), pool.end(), 0);
    PolicyOutput out;
    for (int step = 0; step < k; ++step) {
      const std::size_t pick = rng.uniform_int(pool.size());
      out.proposals.push_back(anchors[pool[pick]]);
      out.log_prob -= std::log(static_cast<double>(pool.size()));
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return out;
  }

  std::string name() const override { return "random"; }
};

// Raster-order tiling: the near-exhaustive search pattern baseline.
struct GridPolicy final : public SensingPolicy {
  int k = 3;
  int grid_side = 2;

  explicit GridPolicy(int k_ = 3, int grid_side_ = 2) : k(k_), grid_side(grid_side_) {
    if (grid_side < 1) throw std::invalid_argument("GridPolicy: grid_side < 1");
  }

  PolicyOutput propose(const PolicyContext& ctx, Rng&) const override {
    const int w = ctx.scene->width, h = ctx.scene->height;
    int want = k;
    if (want > grid_side * grid_side) {
      std::cerr << "GridPolicy: k=" << k << " capped at " << grid_side * grid_side << " cells\n";
      want = grid_side * grid_side;
    }
    PolicyOutput out;
    for (int cell = 0; cell < want; ++cell) {
      const int row = cell / grid_side, col = cell % grid_side;
      const int x1 = static_cast<int>(static_cast<std::int64_t>(col) * w / grid_side);
      const int x2 = static_cast<int>(static_cast<std::int64_t>(col + 1) * w / grid_side) - 1;
      const int y1 = static_cast<int>(static_cast<std::int64_t>(row) * h / grid_side);
      const int y2 = static_cast<int>(static_cast<std::int64_t>(row + 1) * h / grid_side) - 1;
      out.proposals.push_back(BBox(x1, y1, x2, y2));
    }
    return out;
  }

  std::string name() const override { return "grid"; }
};

// Ground-truth-aware greedy set cover over the anchor set; the upper-bound
// baseline. For detection an object counts as covered by an anchor when the
// anchor contains it and the anchor's zoom makes it recognizable; for
// segmentation the gain is newly covered disagreement pixels.
struct OracleCoveragePolicy final : public SensingPolicy {
  int k = 3;
  double crop_resolution = 840.0;
  double min_apparent_area = 100.0;

  explicit OracleCoveragePolicy(int k_ = 3) : k(k_) {}

  PolicyOutput propose(const PolicyContext& ctx, Rng&) const override {
    const Scene& scene = *ctx.scene;
    const auto anchors = build_anchor_grid(scene.width, scene.height);
    PolicyOutput out;
    std::vector<char> chosen(anchors.size(), 0);

    if (ctx.pred_mask != nullptr && scene.merged_gt_mask) {
      BitMask remaining = mask_xor(*ctx.pred_mask, *scene.merged_gt_mask);
      for (int step = 0; step < k && step < static_cast<int>(anchors.size()); ++step) {
        std::int64_t best = -1;
        int pick = -1;
        for (std::size_t i = 0; i < anchors.size(); ++i) {
          if (chosen[i]) continue;
          const std::int64_t gain = remaining.count_in_box(anchors[i]);
          if (gain > best) {
            best = gain;
            pick = static_cast<int>(i);
          }
        }
        chosen[pick] = 1;
        out.proposals.push_back(anchors[pick]);
        remaining.fill_box(anchors[pick], false);
      }
      return out;
    }

    const auto detectable = [&](const SceneObject& obj, const BBox& anchor) {
      if (!anchor.contains_box(obj.bbox)) return false;
      const double scale =
          crop_resolution / static_cast<double>(std::max(anchor.width(), anchor.height()));
      return static_cast<double>(obj.area) * scale * scale >= min_apparent_area;
    };
    std::vector<char> covered(scene.objects.size(), 0);
    for (int step = 0; step < k && step < static_cast<int>(anchors.size()); ++step) {
      std::int64_t best = -1;
      int pick = -1;
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (chosen[i]) continue;
        std::int64_t gain = 0;
        for (std::size_t o = 0; o < scene.objects.size(); ++o)
          if (!covered[o] && detectable(scene.objects[o], anchors[i])) ++gain;
        if (gain > best) {
          best = gain;
          pick = static_cast<int>(i);
        }
      }
      chosen[pick] = 1;
      out.proposals.push_back(anchors[pick]);
      for (std::size_t o = 0; o < scene.objects.size(); ++o)
        if (!covered[o] && detectable(scene.objects[o], anchors[pick])) covered[o] = 1;
    }
    return out;
  }

  std::string name() const override { return "oracle"; }
};

// Policy-driven episode wrappers.

inline EpisodeRecord run_detection_episode(const Scene& scene, const SensingPolicy& policy,
                                           const SensingConfig& sensing,
                                           const TaskModelConfig& task_model,
                                           const RewardConfig& reward, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "policy", 0));
  PolicyContext ctx{&scene, initial_observation(scene, sensing), nullptr, sensing.k_parallel};
  const PolicyOutput po = policy.propose(ctx, rng);
  return run_detection_episode_with(scene, po.proposals, !po.proposals.empty(), sensing,
                                    task_model, reward, seed);
}

inline EpisodeRecord run_segmentation_episode(const Scene& scene, const SensingPolicy& policy,
                                              const BitMask& initial_pred, int budget,
                                              const SensingConfig& sensing,
                                              const RewardConfig& reward, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "policy", 0));
  PolicyContext ctx{&scene, initial_observation(scene, sensing), &initial_pred, budget};
  const PolicyOutput po = policy.propose(ctx, rng);
  return run_segmentation_episode_with(scene, po.proposals, !po.proposals.empty(), initial_pred,
                                       budget, sensing, reward, seed);
}

}  // namespace zoomrl
