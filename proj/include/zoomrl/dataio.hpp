#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "zoomrl/environment.hpp"
#include "zoomrl/policy.hpp"
#include "zoomrl/rng.hpp"
#include "zoomrl/scene.hpp"

namespace zoomrl {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kSceneSchemaVersion = 1;
inline constexpr int kSnapshotSchemaVersion = 1;

namespace detail {

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw DataError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.good()) throw DataError("cannot write " + path);
  out << content;
  if (!out.good()) throw DataError("write failed for " + path);
}

inline nlohmann::json parse_json_file(const std::string& path) {
  const auto doc = nlohmann::json::parse(slurp(path), nullptr, false);
  if (doc.is_discarded()) throw DataError("malformed JSON in " + path);
  return doc;
}

inline nlohmann::json mask_to_json(const BitMask& m) {
  nlohmann::json j;
  j["width"] = m.width();
  j["height"] = m.height();
  j["runs"] = m.to_runs();
  return j;
}

inline BitMask mask_from_json(const nlohmann::json& j) {
  if (!j.contains("width") || !j.contains("height") || !j.contains("runs"))
    throw DataError("mask object needs width/height/runs");
  return BitMask::from_runs(j["width"].get<int>(), j["height"].get<int>(),
                            j["runs"].get<std::vector<std::int64_t>>());
}

inline nlohmann::json bbox_to_json(const BBox& b) {
  return nlohmann::json::array({b.x1, b.y1, b.x2, b.y2});
}

inline BBox bbox_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("bbox must be a 4-array");
  return BBox(j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>());
}

// scene_id ordering: numeric ids sort numerically, everything else
// lexicographically after them
inline bool scene_id_less(const std::string& a, const std::string& b) {
  const auto digits = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  const bool da = digits(a), db = digits(b);
  if (da != db) return da;
  if (da && db) {
    if (a.size() != b.size()) return a.size() < b.size();
  }
  return a < b;
}

}  // namespace detail

inline nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json j;
  j["scene_id"] = s.scene_id;
  j["width"] = s.width;
  j["height"] = s.height;
  j["objects"] = nlohmann::json::array();
  for (const auto& o : s.objects) {
    nlohmann::json jo;
    jo["bbox"] = detail::bbox_to_json(o.bbox);
    jo["category"] = o.category;
    jo["area"] = o.area;
    if (o.instance_mask) jo["mask"] = detail::mask_to_json(*o.instance_mask);
    j["objects"].push_back(std::move(jo));
  }
  if (s.merged_gt_mask) j["merged_gt_mask"] = detail::mask_to_json(*s.merged_gt_mask);
  return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  if (!j.contains("scene_id") || !j.contains("width") || !j.contains("height") ||
      !j.contains("objects"))
    throw DataError("scene object needs scene_id/width/height/objects");
  s.scene_id = j["scene_id"].get<std::string>();
  s.width = j["width"].get<int>();
  s.height = j["height"].get<int>();
  for (const auto& jo : j["objects"]) {
    SceneObject o;
    o.bbox = detail::bbox_from_json(jo.at("bbox"));
    o.category = jo.at("category").get<std::string>();
    o.area = jo.contains("area") ? jo["area"].get<std::int64_t>() : o.bbox.area();
    if (jo.contains("mask")) o.instance_mask = detail::mask_from_json(jo["mask"]);
    s.objects.push_back(std::move(o));
  }
  if (j.contains("merged_gt_mask")) s.merged_gt_mask = detail::mask_from_json(j["merged_gt_mask"]);
  s.check();
  return s;
}

inline void save_scenes(const std::string& path, std::span<const Scene> scenes) {
  nlohmann::json j;
  j["schema_version"] = kSceneSchemaVersion;
  j["scenes"] = nlohmann::json::array();
  for (const auto& s : scenes) j["scenes"].push_back(scene_to_json(s));
  detail::spit(path, j.dump(1) + "\n");
}

inline std::vector<Scene> load_scenes(const std::string& path) {
  const auto j = detail::parse_json_file(path);
  if (!j.contains("schema_version")) throw DataError("scene file lacks schema_version");
  if (j["schema_version"].get<int>() != kSceneSchemaVersion)
    throw DataError("unsupported scene schema_version " + j["schema_version"].dump());
  if (!j.contains("scenes") || !j["scenes"].is_array())
    throw DataError("scene file lacks scenes array");
  std::vector<Scene> out;
  for (const auto& js : j["scenes"]) out.push_back(scene_from_json(js));
  return out;
}

// COCO-subset ingestion: images/annotations/categories, xywh boxes converted
// to inclusive corners (x2 = x + w - 1, truncated toward zero). Degenerate
// boxes are dropped with a warning; polygon segmentations contribute their
// bbox only.
inline std::vector<Scene> import_coco(const std::string& path) {
  const auto j = detail::parse_json_file(path);
  for (const char* key : {"images", "annotations", "categories"})
    if (!j.contains(key) || !j[key].is_array())
      throw DataError(std::string("COCO file lacks the ") + key + " array");

  std::map<std::int64_t, std::string> cat_names;
  for (const auto& c : j["categories"]) {
    if (!c.contains("id") || !c.contains("name")) throw DataError("category needs id and name");
    if (!cat_names.emplace(c["id"].get<std::int64_t>(), c["name"].get<std::string>()).second)
      throw DataError("duplicate category id " + c["id"].dump());
  }

  std::map<std::int64_t, Scene> by_image;
  std::vector<std::int64_t> image_order;
  for (const auto& im : j["images"]) {
    if (!im.contains("id") || !im.contains("width") || !im.contains("height"))
      throw DataError("image needs id/width/height");
    const auto id = im["id"].get<std::int64_t>();
    Scene s;
    s.width = im["width"].get<int>();
    s.height = im["height"].get<int>();
    if (s.width <= 0 || s.height <= 0) throw DataError("image with empty frame");
    s.scene_id = std::to_string(id);
    if (!by_image.emplace(id, std::move(s)).second)
      throw DataError("duplicate image id " + std::to_string(id));
    image_order.push_back(id);
  }

  for (const auto& an : j["annotations"]) {
    if (!an.contains("image_id") || !an.contains("category_id") || !an.contains("bbox"))
      throw DataError("annotation needs image_id/category_id/bbox");
    const auto img = by_image.find(an["image_id"].get<std::int64_t>());
    if (img == by_image.end())
      throw DataError("annotation references unknown image " + an["image_id"].dump());
    const auto cat = cat_names.find(an["category_id"].get<std::int64_t>());
    if (cat == cat_names.end())
      throw DataError("annotation references unknown category " + an["category_id"].dump());
    const auto& bb = an["bbox"];
    if (!bb.is_array() || bb.size() != 4) throw DataError("annotation bbox must be a 4-array");
    const double x = bb[0].get<double>(), y = bb[1].get<double>();
    const double w = bb[2].get<double>(), h = bb[3].get<double>();
    if (w <= 0.0 || h <= 0.0) {
      std::cerr << "import_coco: dropping annotation with non-positive extent in image "
                << img->second.scene_id << "\n";
      continue;
    }
    Scene& s = img->second;
    int x1 = static_cast<int>(std::trunc(x));
    int y1 = static_cast<int>(std::trunc(y));
    int x2 = static_cast<int>(std::trunc(x + w - 1.0));
    int y2 = static_cast<int>(std::trunc(y + h - 1.0));
    x1 = std::clamp(x1, 0, s.width - 1);
    y1 = std::clamp(y1, 0, s.height - 1);
    x2 = std::clamp(x2, x1, s.width - 1);
    y2 = std::clamp(y2, y1, s.height - 1);
    SceneObject o;
    o.bbox = BBox(x1, y1, x2, y2);
    o.category = cat->second;
    o.area = o.bbox.area();
    s.objects.push_back(std::move(o));
  }

  std::vector<Scene> out;
  out.reserve(image_order.size());
  std::sort(image_order.begin(), image_order.end());
  for (auto id : image_order) {
    by_image[id].check();
    out.push_back(std::move(by_image[id]));
  }
  return out;
}

enum class SelectionRule { small, dense, all };

inline SelectionRule selection_rule_from(const std::string& s) {
  if (s == "small") return SelectionRule::small;
  if (s == "dense") return SelectionRule::dense;
  if (s == "all") return SelectionRule::all;
  throw DataError("unknown selection rule: " + s);
}

// Scene-selection rules: "small" keeps scenes containing at least one
// object under 100 px^2, "dense" keeps scenes with more than 15 instances.
// A positive cap then limits how many retained scenes may carry each
// category: scenes are visited in a seeded shuffle order and kept only when
// every category they carry still has quota. The result is ordered by
// scene_id, which makes the cap pass idempotent.
inline std::vector<Scene> select_scenes(std::span<const Scene> scenes, SelectionRule rule, int cap,
                                        std::uint64_t seed) {
  std::vector<const Scene*> filtered;
  for (const auto& s : scenes) {
    bool pass = true;
    if (rule == SelectionRule::small) {
      pass = std::any_of(s.objects.begin(), s.objects.end(),
                         [](const SceneObject& o) { return o.area < 100; });
    } else if (rule == SelectionRule::dense) {
      pass = s.objects.size() > 15;
    }
    if (pass) filtered.push_back(&s);
  }

  if (cap > 0) {
    Rng rng(derive_seed(seed, "select", 0));
    for (std::size_t i = filtered.size(); i > 1; --i)
      std::swap(filtered[i - 1], filtered[rng.uniform_int(i)]);
    std::map<std::string, int> counts;
    std::vector<const Scene*> kept;
    for (const Scene* s : filtered) {
      std::set<std::string> cats;
      for (const auto& o : s->objects) cats.insert(o.category);
      const bool ok = std::all_of(cats.begin(), cats.end(),
                                  [&](const std::string& c) { return counts[c] < cap; });
      if (!ok) continue;
      for (const auto& c : cats) ++counts[c];
      kept.push_back(s);
    }
    filtered = std::move(kept);
  }

  std::sort(filtered.begin(), filtered.end(), [](const Scene* a, const Scene* b) {
    return detail::scene_id_less(a->scene_id, b->scene_id);
  });
  std::vector<Scene> out;
  out.reserve(filtered.size());
  for (const Scene* s : filtered) out.push_back(*s);
  return out;
}

// Subset-construction parameters for ingesting a COCO-style file.
struct DatasetManifest {
  std::string source_path;
  SelectionRule rule = SelectionRule::all;
  int per_category_cap = 0;  // 0 = uncapped
  std::uint64_t seed = 0;
};

inline std::vector<Scene> import_manifest(const DatasetManifest& m) {
  return select_scenes(import_coco(m.source_path), m.rule, m.per_category_cap, m.seed);
}

inline nlohmann::json observation_to_json(const Observation& o) {
  nlohmann::json j;
  j["source"] = detail::bbox_to_json(o.transform.source);
  j["target_w"] = o.transform.target_w;
  j["target_h"] = o.transform.target_h;
  j["effective_scale"] = o.effective_scale;
  return j;
}

inline nlohmann::json episode_to_json(const EpisodeRecord& r) {
  nlohmann::json j;
  j["scene_id"] = r.scene_id;
  j["seed"] = r.seed;
  j["actions"] = nlohmann::json::array();
  for (const auto& a : r.actions) j["actions"].push_back(detail::bbox_to_json(a));
  j["observations"] = nlohmann::json::array();
  for (const auto& o : r.observations) j["observations"].push_back(observation_to_json(o));
  j["detections"] = nlohmann::json::array();
  for (const auto& d : r.detections) {
    nlohmann::json jd;
    jd["bbox"] = detail::bbox_to_json(d.bbox);
    jd["category"] = d.category;
    jd["score"] = d.score;
    j["detections"].push_back(std::move(jd));
  }
  j["miou_trajectory"] = r.miou_trajectory;
  j["reward"] = {
      {"r_format", r.reward.r_format},       {"r_no_overlap", r.reward.r_no_overlap},
      {"r_area", r.reward.r_area},           {"r_coverage", r.reward.r_coverage},
      {"r_task", r.reward.r_task},           {"heuristic_total", r.reward.heuristic_total},
      {"total", r.reward.total}};
  return j;
}

// JSON lines, one record each.
inline void save_episodes(const std::string& path, std::span<const EpisodeRecord> records) {
  std::string out;
  for (const auto& r : records) out += episode_to_json(r).dump() + "\n";
  detail::spit(path, out);
}

inline void save_policy_snapshot(const std::string& path, const AnchorGridPolicy& policy) {
  nlohmann::json j;
  j["schema_version"] = kSnapshotSchemaVersion;
  j["frame"] = {policy.ref_w, policy.ref_h};
  j["k"] = policy.k;
  j["anchors"] = nlohmann::json::array();
  for (const auto& a : policy.anchors) j["anchors"].push_back(detail::bbox_to_json(a));
  j["logits"] = policy.logits;
  detail::spit(path, j.dump(1) + "\n");
}

inline AnchorGridPolicy load_policy_snapshot(const std::string& path) {
  const auto j = detail::parse_json_file(path);
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != kSnapshotSchemaVersion)
    throw DataError("unsupported policy snapshot schema");
  AnchorGridPolicy p;
  p.ref_w = j.at("frame")[0].get<int>();
  p.ref_h = j.at("frame")[1].get<int>();
  p.k = j.at("k").get<int>();
  for (const auto& ja : j.at("anchors")) p.anchors.push_back(detail::bbox_from_json(ja));
  p.logits = j.at("logits").get<std::vector<double>>();
  if (p.logits.size() != p.anchors.size())
    throw DataError("policy snapshot: logits/anchors length mismatch");
  if (p.anchors.empty() || p.k < 1 || p.k > static_cast<int>(p.anchors.size()))
    throw DataError("policy snapshot: bad k or empty anchors");
  return p;
}

}  // namespace zoomrl
