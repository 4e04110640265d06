#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "zoomrl/geometry.hpp"
#include "zoomrl/metrics.hpp"
#include "zoomrl/rng.hpp"

namespace zoomrl {

struct SceneObject {
  BBox bbox;
  std::string category;
  std::int64_t area = 0;  // inclusive bbox area, or mask popcount when a mask is present
  std::optional<BitMask> instance_mask;
};

// Static environment state: frame size plus ground-truth annotations. The
// scene is purely symbolic; no pixel values exist anywhere in the system.
struct Scene {
  int width = 0;
  int height = 0;
  std::vector<SceneObject> objects;
  std::optional<BitMask> merged_gt_mask;
  std::string scene_id;

  std::vector<GroundTruth> gt_boxes() const {
    std::vector<GroundTruth> out;
    out.reserve(objects.size());
    for (const auto& o : objects) out.push_back({o.bbox, o.category});
    return out;
  }

  void check() const {
    if (width <= 0 || height <= 0) throw std::invalid_argument("Scene: empty frame");
    for (const auto& o : objects) {
      if (!o.bbox.in_frame(width, height)) throw std::invalid_argument("Scene: object outside frame");
      const std::int64_t expect = o.instance_mask ? o.instance_mask->popcount() : o.bbox.area();
      if (o.area != expect) throw std::invalid_argument("Scene: object area mismatch");
    }
    if (merged_gt_mask && (merged_gt_mask->width() != width || merged_gt_mask->height() != height))
      throw std::invalid_argument("Scene: merged mask frame mismatch");
  }
};

// Synthetic scene generation: clusters of small objects plus optional large
// distractors. With shared_layout the cluster centers are drawn once per
// batch, so a context-free policy has a stable spatial structure to learn.
struct SceneGenConfig {
  int width = 1024;
  int height = 1024;
  int cluster_count = 3;
  int objects_per_cluster = 8;
  int object_min_side = 4;
  int object_max_side = 9;
  int cluster_radius = 30;          // object centers stay within this Chebyshev radius
  int cluster_min_separation = 560; // Euclidean distance between cluster centers
  int margin = 96;                  // cluster centers keep this distance from the border
  int distractor_count = 0;
  int distractor_min_side = 120;
  int distractor_max_side = 240;
  // Same-category objects are kept below this pairwise IoU so that no pair
  // collapses under the cross-crop NMS dedup.
  double max_gt_overlap = 0.45;
  std::vector<std::string> categories = {"target"};
  bool with_mask = false;
  bool shared_layout = true;
  std::string scene_id_prefix = "scene";

  void check() const {
    if (width <= 0 || height <= 0) throw std::invalid_argument("SceneGenConfig: empty frame");
    if (cluster_count < 0 || objects_per_cluster < 0 || distractor_count < 0)
      throw std::invalid_argument("SceneGenConfig: negative counts");
    if (object_min_side < 1 || object_min_side > object_max_side)
      throw std::invalid_argument("SceneGenConfig: object side range");
    const int shorter = std::min(width, height);
    if (cluster_count > 0 && objects_per_cluster > 0 && object_max_side > shorter)
      throw std::invalid_argument("SceneGenConfig: objects cannot fit in the frame");
    if (distractor_count > 0 && (distractor_min_side < 1 || distractor_min_side > distractor_max_side))
      throw std::invalid_argument("SceneGenConfig: distractor side range");
    if (distractor_count > 0 && distractor_max_side > shorter)
      throw std::invalid_argument("SceneGenConfig: distractors cannot fit in the frame");
    if (categories.empty()) throw std::invalid_argument("SceneGenConfig: no categories");
  }
};

namespace detail {

inline std::vector<std::pair<int, int>> draw_cluster_centers(const SceneGenConfig& cfg, Rng& rng) {
  const int lo_x = cfg.margin, hi_x = cfg.width - 1 - cfg.margin;
  const int lo_y = cfg.margin, hi_y = cfg.height - 1 - cfg.margin;
  if (cfg.cluster_count > 0 && (lo_x > hi_x || lo_y > hi_y))
    throw std::runtime_error("generate_scene: margin leaves no room for clusters");
  // whole-layout restarts: keeping early draws can paint the sampler into a
  // corner where no further center fits
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<std::pair<int, int>> centers;
    bool ok = true;
    for (int c = 0; c < cfg.cluster_count && ok; ++c) {
      const int cx = static_cast<int>(rng.uniform_range(lo_x, hi_x));
      const int cy = static_cast<int>(rng.uniform_range(lo_y, hi_y));
      for (const auto& [px, py] : centers) {
        const double dx = cx - px, dy = cy - py;
        if (std::sqrt(dx * dx + dy * dy) < cfg.cluster_min_separation) {
          ok = false;
          break;
        }
      }
      centers.emplace_back(cx, cy);
    }
    if (ok) return centers;
  }
  throw std::runtime_error("generate_scene: cannot place clusters at the requested separation");
}

inline BBox box_around(int cx, int cy, int w, int h, int frame_w, int frame_h) {
  int x1 = cx - w / 2;
  int y1 = cy - h / 2;
  x1 = std::max(0, std::min(x1, frame_w - w));
  y1 = std::max(0, std::min(y1, frame_h - h));
  return BBox(x1, y1, x1 + w - 1, y1 + h - 1);
}

}  // namespace detail

inline Scene generate_scene_with_layout(const SceneGenConfig& cfg,
                                        const std::vector<std::pair<int, int>>& centers,
                                        std::uint64_t seed, int index) {
  cfg.check();
  Rng rng(derive_seed(seed, "scene-objects", static_cast<std::uint64_t>(index)));
  Scene scene;
  scene.width = cfg.width;
  scene.height = cfg.height;
  char idbuf[32];
  std::snprintf(idbuf, sizeof(idbuf), "-%04d", index);
  scene.scene_id = cfg.scene_id_prefix + idbuf;

  const auto place = [&](int cx, int cy, int min_side, int max_side) {
    for (int attempt = 0; attempt < 500; ++attempt) {
      const int w = static_cast<int>(rng.uniform_range(min_side, max_side));
      const int h = static_cast<int>(rng.uniform_range(min_side, max_side));
      const BBox b = detail::box_around(cx, cy, w, h, cfg.width, cfg.height);
      const std::string cat = cfg.categories[rng.uniform_int(cfg.categories.size())];
      const bool separable =
          std::none_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& o) {
            return o.category == cat && iou(o.bbox, b) > cfg.max_gt_overlap;
          });
      if (separable) {
        scene.objects.push_back({b, cat, b.area(), std::nullopt});
        return;
      }
    }
    throw std::runtime_error("generate_scene: cannot place distinct objects (config too dense)");
  };

  for (const auto& [ccx, ccy] : centers) {
    for (int i = 0; i < cfg.objects_per_cluster; ++i) {
      const double sigma = cfg.cluster_radius / 2.0;
      const int ox = static_cast<int>(std::llround(
          std::clamp(rng.normal(0.0, sigma), -static_cast<double>(cfg.cluster_radius),
                     static_cast<double>(cfg.cluster_radius))));
      const int oy = static_cast<int>(std::llround(
          std::clamp(rng.normal(0.0, sigma), -static_cast<double>(cfg.cluster_radius),
                     static_cast<double>(cfg.cluster_radius))));
      place(ccx + ox, ccy + oy, cfg.object_min_side, cfg.object_max_side);
    }
  }
  for (int i = 0; i < cfg.distractor_count; ++i) {
    const int w = static_cast<int>(rng.uniform_range(cfg.distractor_min_side, cfg.distractor_max_side));
    const int cx = static_cast<int>(rng.uniform_range(w / 2, cfg.width - 1 - w / 2));
    const int cy = static_cast<int>(rng.uniform_range(w / 2, cfg.height - 1 - w / 2));
    place(cx, cy, w, w);
  }

  if (cfg.with_mask) {
    BitMask merged(cfg.width, cfg.height);
    for (const auto& o : scene.objects) merged.fill_box(o.bbox, true);
    scene.merged_gt_mask = std::move(merged);
  }
  scene.check();
  return scene;
}

inline Scene generate_scene(const SceneGenConfig& cfg, std::uint64_t seed, int index = 0) {
  Rng layout_rng(derive_seed(seed, "layout", cfg.shared_layout ? 0 : static_cast<std::uint64_t>(index)));
  const auto centers = detail::draw_cluster_centers(cfg, layout_rng);
  return generate_scene_with_layout(cfg, centers, seed, index);
}

inline std::vector<Scene> generate_scenes(const SceneGenConfig& cfg, int count, std::uint64_t seed) {
  Rng layout_rng(derive_seed(seed, "layout", 0));
  std::vector<std::pair<int, int>> shared;
  if (cfg.shared_layout) shared = detail::draw_cluster_centers(cfg, layout_rng);
  std::vector<Scene> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    if (cfg.shared_layout) {
      out.push_back(generate_scene_with_layout(cfg, shared, seed, i));
    } else {
      Rng per_scene(derive_seed(seed, "layout", static_cast<std::uint64_t>(i)));
      out.push_back(generate_scene_with_layout(cfg, detail::draw_cluster_centers(cfg, per_scene), seed, i));
    }
  }
  return out;
}

// Benchmark presets. Detection: dense clusters of sub-100 px^2 objects in a
// 1024^2 frame (the generator defaults). Segmentation: fewer, larger objects
// whose dilation bands and boundary blobs stay within a mid-scale anchor.
inline SceneGenConfig detection_benchmark_config() { return SceneGenConfig{}; }

inline SceneGenConfig segmentation_benchmark_config() {
  SceneGenConfig cfg;
  cfg.objects_per_cluster = 5;
  cfg.object_min_side = 16;
  cfg.object_max_side = 40;
  cfg.cluster_radius = 48;
  cfg.with_mask = true;
  return cfg;
}

// Degrades a ground-truth mask into a plausible failed prediction:
// boundary dilation/erosion bands plus a few flipped error blobs. Blobs sit
// on the mask boundary by default, where real segmentation errors live.
struct CorruptionConfig {
  int dilate_band = 4;
  int erode_band = 0;
  int blob_count = 3;
  int blob_min_side = 8;
  int blob_max_side = 24;
  bool blobs_on_boundary = true;
};

inline BitMask corrupt_mask(const BitMask& gt, const CorruptionConfig& cfg, std::uint64_t seed) {
  if (cfg.blob_count > 0 && (cfg.blob_min_side < 1 || cfg.blob_min_side > cfg.blob_max_side))
    throw std::invalid_argument("corrupt_mask: blob side range");
  Rng rng(derive_seed(seed, "corrupt", 0));
  BitMask pred = gt;
  if (cfg.dilate_band > 0) pred = dilate(pred, cfg.dilate_band);
  if (cfg.erode_band > 0) pred = erode(pred, cfg.erode_band);

  std::vector<std::pair<int, int>> boundary;
  if (cfg.blobs_on_boundary && cfg.blob_count > 0) {
    for (int y = 0; y < gt.height(); ++y)
      for (int x = 0; x < gt.width(); ++x) {
        if (!gt.get(x, y)) continue;
        const bool edge = x == 0 || y == 0 || x == gt.width() - 1 || y == gt.height() - 1 ||
                          !gt.get(x - 1, y) || !gt.get(x + 1, y) || !gt.get(x, y - 1) ||
                          !gt.get(x, y + 1);
        if (edge) boundary.emplace_back(x, y);
      }
  }
  for (int i = 0; i < cfg.blob_count; ++i) {
    const int w = static_cast<int>(rng.uniform_range(cfg.blob_min_side, cfg.blob_max_side));
    const int h = static_cast<int>(rng.uniform_range(cfg.blob_min_side, cfg.blob_max_side));
    int cx, cy;
    if (!boundary.empty()) {
      const auto& [bx, by] = boundary[rng.uniform_int(boundary.size())];
      cx = bx;
      cy = by;
    } else {
      cx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(gt.width())));
      cy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(gt.height())));
    }
    pred.flip_box(detail::box_around(cx, cy, std::min(w, gt.width()), std::min(h, gt.height()),
                                     gt.width(), gt.height()));
  }
  return pred;
}

}  // namespace zoomrl
