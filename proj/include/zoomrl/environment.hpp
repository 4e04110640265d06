#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zoomrl/geometry.hpp"
#include "zoomrl/metrics.hpp"
#include "zoomrl/reward.hpp"
#include "zoomrl/rng.hpp"
#include "zoomrl/scene.hpp"

namespace zoomrl {

// Per-episode sensing limits and resize conventions.
struct SensingConfig {
  int budget_k = 3;             // zoom actions per episode
  int init_shorter_side = 1024; // global-view resize rule
  int crop_resolution = 840;    // square crop raster
  int k_parallel = 3;           // proposals consumed per step

  void check() const {
    if (budget_k < 1) throw std::invalid_argument("SensingConfig: budget_k < 1");
    if (init_shorter_side < 1 || crop_resolution < 1 || k_parallel < 1)
      throw std::invalid_argument("SensingConfig: resolutions must be positive");
  }
};

// Surrogate task-model behaviour: an object is recognizable once its
// apparent (post-zoom) area reaches min_apparent_area. Noise defaults off.
struct TaskModelConfig {
  double min_apparent_area = 100.0;  // px^2 after zoom
  double miss_rate = 0.0;            // Bernoulli miss probability per visible object
  double jitter_sigma = 0.0;         // Gaussian jitter on crop-local corners, px
  double score_saturation = 2.0;     // score = clamp(apparent / (this * min_apparent_area), 0, 1)

  void check() const {
    if (min_apparent_area <= 0.0) throw std::invalid_argument("TaskModelConfig: threshold");
    if (miss_rate < 0.0 || miss_rate > 1.0) throw std::invalid_argument("TaskModelConfig: miss_rate");
    if (jitter_sigma < 0.0) throw std::invalid_argument("TaskModelConfig: jitter_sigma");
    if (score_saturation <= 0.0) throw std::invalid_argument("TaskModelConfig: score_saturation");
  }
};

// A realized sensing action: the crop transform, the apparent magnification
// relative to native resolution, and the visible full-image region.
struct Observation {
  CropTransform transform;
  double effective_scale = 0.0;  // min(scale_x, scale_y)
  BBox visible_frame;
};

// Low-resolution global view: shorter side resized to init_shorter_side,
// aspect ratio preserved.
inline Observation initial_observation(const Scene& scene, const SensingConfig& cfg) {
  cfg.check();
  scene.check();
  const double shorter = static_cast<double>(std::min(scene.width, scene.height));
  const double s = static_cast<double>(cfg.init_shorter_side) / shorter;
  const int tw = std::max(1, static_cast<int>(std::llround(scene.width * s)));
  const int th = std::max(1, static_cast<int>(std::llround(scene.height * s)));
  Observation obs;
  obs.visible_frame = BBox(0, 0, scene.width - 1, scene.height - 1);
  obs.transform = CropTransform(obs.visible_frame, tw, th);
  obs.effective_scale = std::min(obs.transform.scale_x, obs.transform.scale_y);
  return obs;
}

// Zoom into a_cam: crop and resize to the fixed square crop raster.
inline Observation apply_sensing(const Scene& scene, const BBox& a_cam, const SensingConfig& cfg) {
  cfg.check();
  if (!a_cam.in_frame(scene.width, scene.height))
    throw std::invalid_argument("apply_sensing: action outside frame");
  Observation obs;
  obs.visible_frame = a_cam;
  obs.transform = CropTransform(a_cam, cfg.crop_resolution, cfg.crop_resolution);
  obs.effective_scale = std::min(obs.transform.scale_x, obs.transform.scale_y);
  return obs;
}

// Surrogate for the downstream task model on one crop: every ground-truth
// object whose center is visible and whose apparent area clears the
// threshold is returned as a detection in full-image coordinates. With the
// default noiseless config the output is exact and consumes no randomness.
inline std::vector<Detection> simulated_task_model(const Observation& obs, const Scene& scene,
                                                   const TaskModelConfig& cfg, Rng& rng) {
  cfg.check();
  std::vector<Detection> out;
  const BBox& vf = obs.visible_frame;
  for (const auto& obj : scene.objects) {
    const double cx = (obj.bbox.x1 + obj.bbox.x2) / 2.0;
    const double cy = (obj.bbox.y1 + obj.bbox.y2) / 2.0;
    if (cx < vf.x1 || cx > vf.x2 || cy < vf.y1 || cy > vf.y2) continue;
    const double apparent = static_cast<double>(obj.area) * obs.effective_scale * obs.effective_scale;
    if (apparent < cfg.min_apparent_area) continue;
    if (cfg.miss_rate > 0.0 && rng.uniform01() <= cfg.miss_rate) continue;

    const BBox clipped(std::max(obj.bbox.x1, vf.x1), std::max(obj.bbox.y1, vf.y1),
                       std::min(obj.bbox.x2, vf.x2), std::min(obj.bbox.y2, vf.y2));
    BBox local = remap_to_crop(obs.transform, clipped);
    if (cfg.jitter_sigma > 0.0) {
      auto jit = [&](int v, int hi) {
        const int j = static_cast<int>(std::llround(v + rng.normal(0.0, cfg.jitter_sigma)));
        return std::max(0, std::min(j, hi));
      };
      int x1 = jit(local.x1, obs.transform.target_w - 1);
      int x2 = jit(local.x2, obs.transform.target_w - 1);
      int y1 = jit(local.y1, obs.transform.target_h - 1);
      int y2 = jit(local.y2, obs.transform.target_h - 1);
      local = BBox(std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2));
    }
    const double score =
        std::clamp(apparent / (cfg.score_saturation * cfg.min_apparent_area), 0.0, 1.0);
    out.push_back({remap_to_full(obs.transform, local), obj.category, score});
  }
  return out;
}

// Interactive-segmentation state under the perfect-feedback oracle.
struct SegState {
  BitMask pred_mask;
  BitMask gt_mask;
  int steps_used = 0;
  int budget = 3;
};

// Perfect feedback inside the chosen region: predicted bits there are
// replaced by ground truth; everything outside is untouched.
inline SegState oracle_refine(const SegState& st, const BBox& a_cam) {
  if (st.steps_used >= st.budget)
    throw std::runtime_error("oracle_refine: sensing budget exhausted");
  if (!st.pred_mask.same_frame(st.gt_mask))
    throw std::invalid_argument("oracle_refine: mask frame mismatch");
  if (!a_cam.in_frame(st.pred_mask.width(), st.pred_mask.height()))
    throw std::invalid_argument("oracle_refine: action outside frame");
  SegState out = st;
  out.pred_mask.copy_box_from(st.gt_mask, a_cam);
  out.steps_used += 1;
  return out;
}

enum class RewardMode { task, heuristic, combined };

inline const char* to_string(RewardMode m) {
  switch (m) {
    case RewardMode::task: return "task";
    case RewardMode::heuristic: return "heuristic";
    case RewardMode::combined: return "combined";
  }
  return "?";
}

// Reward wiring for an episode: heuristic thresholds plus the dual-form
// combination switch.
struct RewardConfig {
  HeuristicConfig heuristic;
  RewardMode mode = RewardMode::combined;
  double w_heuristic = 1.0;
  double w_task = 1.0;
  double nms_iou = 0.5;  // cross-crop duplicate suppression

  double eff_w_heuristic() const { return mode == RewardMode::task ? 0.0 : w_heuristic; }
  double eff_w_task() const { return mode == RewardMode::heuristic ? 0.0 : w_task; }
};

// Everything one episode produced; the unit persisted to episode logs.
struct EpisodeRecord {
  std::string scene_id;
  std::vector<BBox> actions;
  std::vector<Observation> observations;
  std::vector<Detection> detections;    // detection task, full frame, after NMS
  std::vector<double> miou_trajectory;  // segmentation task, budgets 0..n
  RewardBreakdown reward;
  std::uint64_t seed = 0;
};

// Single-step detection episode over pre-parsed proposals: apply up to
// k_parallel crops, run the task model per crop, merge with NMS, then score.
// A format failure (no proposals) still yields a complete zero-spatial-reward
// record.
inline EpisodeRecord run_detection_episode_with(const Scene& scene, std::span<const BBox> proposals,
                                                bool format_ok, const SensingConfig& sensing,
                                                const TaskModelConfig& task_model,
                                                const RewardConfig& reward, std::uint64_t seed) {
  sensing.check();
  Rng rng(derive_seed(seed, "detect-episode", 0));
  EpisodeRecord rec;
  rec.scene_id = scene.scene_id;
  rec.seed = seed;

  const std::size_t n_actions = std::min<std::size_t>(proposals.size(), sensing.k_parallel);
  std::vector<Detection> raw;
  for (std::size_t i = 0; i < n_actions; ++i) {
    rec.actions.push_back(proposals[i]);
    const Observation obs = apply_sensing(scene, proposals[i], sensing);
    rec.observations.push_back(obs);
    auto dets = simulated_task_model(obs, scene, task_model, rng);
    raw.insert(raw.end(), dets.begin(), dets.end());
  }
  rec.detections = nms(raw, reward.nms_iou);

  const auto gts = scene.gt_boxes();
  std::vector<BBox> gt_bare;
  gt_bare.reserve(gts.size());
  for (const auto& g : gts) gt_bare.push_back(g.bbox);
  HeuristicInputs hin;
  hin.format_ok = format_ok && !rec.actions.empty();
  hin.boxes = rec.actions;
  hin.frame_w = scene.width;
  hin.frame_h = scene.height;
  hin.gt_mask = scene.merged_gt_mask ? &*scene.merged_gt_mask : nullptr;
  hin.gt_boxes = gt_bare;
  hin.has_gt_boxes = true;
  rec.reward = heuristic_total(hin, reward.heuristic);
  rec.reward.r_task = r_detect(rec.detections, gts);
  rec.reward.total = reward.eff_w_heuristic() * rec.reward.heuristic_total +
                     reward.eff_w_task() * rec.reward.r_task;
  return rec;
}

// Sequential segmentation episode: proposals are consumed in order, each one
// spent on an oracle refinement step; the per-budget mIoU trajectory is
// recorded from budget 0 (the corrupted baseline) onward.
inline EpisodeRecord run_segmentation_episode_with(const Scene& scene,
                                                   std::span<const BBox> proposals, bool format_ok,
                                                   const BitMask& initial_pred, int budget,
                                                   const SensingConfig& sensing,
                                                   const RewardConfig& reward, std::uint64_t seed) {
  sensing.check();
  if (!scene.merged_gt_mask)
    throw std::invalid_argument("run_segmentation_episode: scene has no ground-truth mask");
  if (budget < 0) throw std::invalid_argument("run_segmentation_episode: negative budget");

  EpisodeRecord rec;
  rec.scene_id = scene.scene_id;
  rec.seed = seed;

  SegState st{initial_pred, *scene.merged_gt_mask, 0, budget};
  rec.miou_trajectory.push_back(mask_iou(st.pred_mask, st.gt_mask));
  const std::size_t n_actions = std::min<std::size_t>(proposals.size(), budget);
  for (std::size_t i = 0; i < n_actions; ++i) {
    rec.actions.push_back(proposals[i]);
    rec.observations.push_back(apply_sensing(scene, proposals[i], sensing));
    st = oracle_refine(st, proposals[i]);
    rec.miou_trajectory.push_back(mask_iou(st.pred_mask, st.gt_mask));
  }

  HeuristicInputs hin;
  hin.format_ok = format_ok && !rec.actions.empty();
  hin.boxes = rec.actions;
  hin.frame_w = scene.width;
  hin.frame_h = scene.height;
  hin.gt_mask = &st.gt_mask;
  hin.pred_mask = &st.pred_mask;
  rec.reward = heuristic_total(hin, reward.heuristic);
  rec.reward.r_task = rec.miou_trajectory.back();
  rec.reward.total = reward.eff_w_heuristic() * rec.reward.heuristic_total +
                     reward.eff_w_task() * rec.reward.r_task;
  return rec;
}

}  // namespace zoomrl
