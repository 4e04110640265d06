#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "zoomrl/config.hpp"
#include "zoomrl/dataio.hpp"
#include "zoomrl/external_policy.hpp"
#include "zoomrl/grpo.hpp"
#include "zoomrl/policy.hpp"
#include "zoomrl/report.hpp"

namespace zoomrl {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void ensure_parent_dir(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline TaskKind task_kind_of(const RunConfig& cfg) {
  if (cfg.eval.task == "detect") return TaskKind::detection;
  if (cfg.eval.task == "segment") return TaskKind::segmentation;
  throw UsageError("eval.task must be 'detect' or 'segment', got '" + cfg.eval.task + "'");
}

inline std::vector<Scene> obtain_scenes(const RunConfig& cfg, const std::string& scenes_path,
                                        std::uint64_t seed) {
  if (!scenes_path.empty()) return load_scenes(scenes_path);
  SceneGenConfig gen = cfg.gen;
  if (task_kind_of(cfg) == TaskKind::segmentation) gen.with_mask = true;
  return generate_scenes(gen, cfg.eval.scene_count, seed);
}

inline BitMask corrupted_for(const Scene& scene, const RunConfig& cfg, std::uint64_t seed) {
  if (!scene.merged_gt_mask)
    throw DataError("scene " + scene.scene_id + " has no mask; segmentation needs gen.with_mask");
  return corrupt_mask(*scene.merged_gt_mask, cfg.corruption,
                      derive_seed(seed, scene.scene_id + "/corrupt", 0));
}

}  // namespace detail

// Builds a policy from its CLI spec: random | grid | oracle | external |
// trained:<snapshot.json>.
inline std::unique_ptr<SensingPolicy> make_policy(const std::string& spec, const RunConfig& cfg) {
  const int k = cfg.eval.policy_k;
  if (spec == "random") return std::make_unique<RandomPolicy>(k);
  if (spec == "grid") return std::make_unique<GridPolicy>(k, cfg.eval.grid_side);
  if (spec == "oracle") {
    auto p = std::make_unique<OracleCoveragePolicy>(k);
    p->crop_resolution = cfg.sensing.crop_resolution;
    p->min_apparent_area = cfg.task_model.min_apparent_area;
    return p;
  }
  if (spec == "external")
    return std::make_unique<ExternalModelPolicy>(cfg.endpoint, detail::task_kind_of(cfg));
  if (spec.rfind("trained:", 0) == 0) {
    const std::string path = spec.substr(8);
    if (path.empty()) throw UsageError("trained policy spec needs a snapshot path");
    auto p = std::make_unique<AnchorGridPolicy>(load_policy_snapshot(path));
    p->greedy_eval = true;  // snapshots deploy greedily
    return p;
  }
  throw UsageError("unknown policy '" + spec +
                   "' (expected random | grid | oracle | external | trained:<path>)");
}

// gen-scenes: write a scene file, either synthetic or imported from a
// COCO-style JSON with the selection rules applied.
inline int cmd_gen_scenes(const RunConfig& cfg, const std::string& out_path, std::uint64_t seed,
                          const std::string& from_coco = "", const std::string& select_rule = "all",
                          int category_cap = 0) {
  if (out_path.empty()) throw UsageError("gen-scenes needs --out");
  std::vector<Scene> scenes;
  if (!from_coco.empty()) {
    DatasetManifest manifest;
    manifest.source_path = from_coco;
    manifest.rule = selection_rule_from(select_rule);
    manifest.per_category_cap = category_cap;
    manifest.seed = seed;
    scenes = import_manifest(manifest);
  } else {
    SceneGenConfig gen = cfg.gen;
    if (cfg.eval.task == "segment") gen.with_mask = true;
    scenes = generate_scenes(gen, cfg.eval.scene_count, seed);
  }
  detail::ensure_parent_dir(out_path);
  save_scenes(out_path, scenes);
  std::size_t objects = 0;
  for (const auto& s : scenes) objects += s.objects.size();
  std::cout << "wrote " << scenes.size() << " scenes (" << objects << " objects) to " << out_path
            << "\n";
  return 0;
}

struct EvalSummary {
  double mean_total = 0.0;
  double mean_r_task = 0.0;
  std::vector<double> budget_curve;  // segmentation only: mean mIoU per budget
};

// eval: run the named policy over every scene, write per-scene CSV, an
// aggregate JSON and (for segmentation) the mIoU-vs-budget curve.
inline EvalSummary cmd_eval(const RunConfig& cfg, const std::string& scenes_path,
                            const std::string& policy_spec, const std::string& out_dir,
                            std::uint64_t seed) {
  if (out_dir.empty()) throw UsageError("eval needs --out");
  const auto scenes = detail::obtain_scenes(cfg, scenes_path, seed);
  if (scenes.empty()) throw DataError("no scenes to evaluate");
  const auto policy = make_policy(policy_spec, cfg);
  std::filesystem::create_directories(out_dir);

  const TaskKind task = detail::task_kind_of(cfg);
  std::vector<EpisodeRecord> episodes;
  std::vector<EvalInstance> instances;

  for (const auto& scene : scenes) {
    for (int sample = 0; sample < cfg.eval.samples_per_scene; ++sample) {
      const std::uint64_t ep_seed = derive_seed(seed, scene.scene_id, sample);
      if (task == TaskKind::detection) {
        EpisodeRecord rec = run_detection_episode(scene, *policy, cfg.sensing, cfg.task_model,
                                                  cfg.reward, ep_seed);
        instances.push_back({rec.detections, scene.gt_boxes()});
        episodes.push_back(std::move(rec));
      } else {
        const BitMask initial = detail::corrupted_for(scene, cfg, seed);
        episodes.push_back(run_segmentation_episode(scene, *policy, initial,
                                                    cfg.sensing.budget_k, cfg.sensing, cfg.reward,
                                                    ep_seed));
      }
    }
  }

  // per-scene CSV: one row per episode plus a mean row at the bottom
  CsvWriter csv;
  csv.comments = config_comment_lines(cfg);
  csv.comments.insert(csv.comments.begin(),
                      "policy = " + policy_spec + ", seed = " + std::to_string(seed));
  csv.columns = {"scene_id",   "sample",          "r_format", "r_no_overlap", "r_area",
                 "r_coverage", "heuristic_total", "r_task",   "total"};
  if (task == TaskKind::detection) {
    csv.columns.push_back("ap");
    csv.columns.push_back("ar");
  }
  std::vector<double> column_sums(csv.columns.size() - 2, 0.0);
  int sample_idx = 0;
  std::string last_scene;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& rec = episodes[e];
    sample_idx = rec.scene_id == last_scene ? sample_idx + 1 : 0;
    last_scene = rec.scene_id;
    std::vector<double> vals = {rec.reward.r_format, rec.reward.r_no_overlap,
                                rec.reward.r_area,   rec.reward.r_coverage,
                                rec.reward.heuristic_total, rec.reward.r_task, rec.reward.total};
    if (task == TaskKind::detection) {
      const auto [ap, ar] = ap_ar_at(instances[e].preds, instances[e].gts, cfg.eval.iou_thr);
      vals.push_back(ap);
      vals.push_back(ar);
    }
    std::vector<std::string> row = {rec.scene_id, std::to_string(sample_idx)};
    for (std::size_t i = 0; i < vals.size(); ++i) {
      column_sums[i] += vals[i];
      row.push_back(fmt_num(vals[i]));
    }
    csv.rows.push_back(std::move(row));
  }
  std::vector<std::string> mean_row = {"aggregate", "-"};
  for (double s : column_sums) mean_row.push_back(fmt_num(s / static_cast<double>(episodes.size())));
  csv.rows.push_back(std::move(mean_row));
  csv.write(out_dir + "/per_scene.csv");
  save_episodes(out_dir + "/episodes.jsonl", episodes);

  EvalSummary summary;
  for (const auto& rec : episodes) {
    summary.mean_total += rec.reward.total;
    summary.mean_r_task += rec.reward.r_task;
  }
  summary.mean_total /= static_cast<double>(episodes.size());
  summary.mean_r_task /= static_cast<double>(episodes.size());

  nlohmann::json agg;
  agg["policy"] = policy_spec;
  agg["seed"] = seed;
  agg["episodes"] = episodes.size();
  agg["mean_total"] = summary.mean_total;
  agg["mean_r_task"] = summary.mean_r_task;

  if (task == TaskKind::detection) {
    const EvalResult coco = coco_eval(instances);
    nlohmann::json jc;
    jc["coco_ap"] = coco.coco_ap;
    jc["ap_by_threshold"] = nlohmann::json::object();
    for (std::size_t i = 0; i < coco.thresholds.size(); ++i) {
      const std::string key = fmt_num(coco.thresholds[i]);
      jc["ap_by_threshold"][key] = coco.ap_by_threshold[i];
      jc["ar_by_threshold"][key] = coco.ar_by_threshold[i];
    }
    jc["ap_small"] = coco.ap_small;
    jc["ap_medium"] = coco.ap_medium;
    jc["ap_large"] = coco.ap_large;
    jc["ar_small"] = coco.ar_small;
    jc["ar_medium"] = coco.ar_medium;
    jc["ar_large"] = coco.ar_large;
    agg["coco"] = std::move(jc);

    double ap_sum = 0.0, ar_sum = 0.0;
    for (const auto& inst : instances) {
      const auto [ap, ar] = ap_ar_at(inst.preds, inst.gts, cfg.eval.iou_thr);
      ap_sum += ap;
      ar_sum += ar;
    }
    agg["ap_at_iou_thr"] = {{"iou_thr", cfg.eval.iou_thr},
                            {"mean_ap", ap_sum / instances.size()},
                            {"mean_ar", ar_sum / instances.size()}};
  } else {
    // mean mIoU per budget from the recorded trajectories
    const std::size_t budgets = static_cast<std::size_t>(cfg.sensing.budget_k) + 1;
    std::vector<double> curve(budgets, 0.0);
    for (const auto& rec : episodes) {
      for (std::size_t b = 0; b < budgets; ++b) {
        const double v = b < rec.miou_trajectory.size() ? rec.miou_trajectory[b]
                                                        : rec.miou_trajectory.back();
        curve[b] += v;
      }
    }
    for (auto& v : curve) v /= static_cast<double>(episodes.size());
    summary.budget_curve = curve;
    agg["miou_by_budget"] = curve;

    CsvWriter bc;
    bc.comments = {"policy = " + policy_spec + ", seed = " + std::to_string(seed)};
    bc.columns = {"budget", "mean_miou"};
    SvgSeries series{policy_spec, {}};
    for (std::size_t b = 0; b < curve.size(); ++b) {
      bc.rows.push_back({std::to_string(b), fmt_num(curve[b])});
      series.points.emplace_back(static_cast<double>(b), curve[b]);
    }
    bc.write(out_dir + "/budget_curve.csv");
    write_svg_chart(out_dir + "/budget_curve.svg", "mean mIoU vs zoom budget", "budget",
                    "mean mIoU", {series});
  }

  detail::spit(out_dir + "/aggregate.json", agg.dump(1) + "\n");
  std::cout << "eval " << policy_spec << ": episodes=" << episodes.size()
            << " mean_total=" << fmt_num(summary.mean_total)
            << " mean_r_task=" << fmt_num(summary.mean_r_task) << "\n";
  return summary;
}

// train: GRPO over the anchor policy; writes the per-iteration report CSV
// and the trained snapshot.
inline TrainReport cmd_train(const RunConfig& cfg, const std::string& scenes_path,
                             const std::string& out_dir, std::uint64_t seed) {
  if (out_dir.empty()) throw UsageError("train needs --out");
  const auto scenes = detail::obtain_scenes(cfg, scenes_path, seed);
  if (scenes.empty()) throw DataError("no scenes to train on");
  const int w = scenes[0].width, h = scenes[0].height;
  for (const auto& s : scenes)
    if (s.width != w || s.height != h)
      throw DataError("train needs a uniform scene frame; '" + s.scene_id + "' differs");
  std::filesystem::create_directories(out_dir);

  AnchorGridPolicy policy = AnchorGridPolicy::make(w, h, cfg.eval.policy_k, kDefaultAnchorScales,
                                                   cfg.reward.heuristic.r_min,
                                                   cfg.reward.heuristic.r_max);

  const TaskKind task = detail::task_kind_of(cfg);
  std::map<std::string, BitMask> corrupted;
  if (task == TaskKind::segmentation)
    for (const auto& s : scenes) corrupted.emplace(s.scene_id, detail::corrupted_for(s, cfg, seed));

  const EpisodeRewardFn reward_fn = [&](const Scene& scene, const PolicyOutput& out,
                                        std::uint64_t ep_seed) {
    if (task == TaskKind::detection) {
      return run_detection_episode_with(scene, out.proposals, !out.proposals.empty(), cfg.sensing,
                                        cfg.task_model, cfg.reward, ep_seed)
          .reward.total;
    }
    return run_segmentation_episode_with(scene, out.proposals, !out.proposals.empty(),
                                         corrupted.at(scene.scene_id), cfg.sensing.budget_k,
                                         cfg.sensing, cfg.reward, ep_seed)
        .reward.total;
  };

  const TrainReport report = train(scenes, policy, reward_fn, cfg.grpo, seed);

  CsvWriter csv;
  csv.comments = config_comment_lines(cfg);
  csv.comments.insert(csv.comments.begin(), "seed = " + std::to_string(seed));
  csv.columns = {"iteration", "mean_reward", "max_reward", "surrogate", "kl", "grad_norm"};
  for (const auto& row : report.rows)
    csv.rows.push_back({std::to_string(row.iteration), fmt_num(row.mean_reward),
                        fmt_num(row.max_reward), fmt_num(row.surrogate), fmt_num(row.kl),
                        fmt_num(row.grad_norm)});
  csv.write(out_dir + "/train_report.csv");
  save_policy_snapshot(out_dir + "/snapshot.json", policy);

  if (!report.rows.empty())
    std::cout << "train: iterations=" << report.rows.size()
              << " first_mean_reward=" << fmt_num(report.rows.front().mean_reward)
              << " final_mean_reward=" << fmt_num(report.rows.back().mean_reward) << "\n";
  return report;
}

// score: full reward breakdown for one raw response text against one scene.
// Parse failures produce a zero-reward breakdown, not an error exit.
inline int cmd_score(const RunConfig& cfg, const std::string& response_path,
                     const std::string& scene_path, const std::string& out_path,
                     std::uint64_t seed) {
  if (response_path.empty() || scene_path.empty())
    throw UsageError("score needs --response and --scenes");
  const std::string text = detail::slurp(response_path);
  const auto scenes = load_scenes(scene_path);
  if (scenes.empty()) throw DataError("scene file is empty");
  const Scene& scene = scenes[0];
  const TaskKind task = detail::task_kind_of(cfg);

  std::vector<BBox> boxes;
  bool format_ok = false;
  std::string failure;
  const auto parsed = parse_response(text);
  if (!parsed) {
    failure = to_string(parsed.error().kind);
  } else {
    int k_min = 0, k_max = 0;
    proposal_count_bounds(task, k_min, k_max);
    const auto validated = validate_proposals(parsed.value(), scene.width, scene.height, k_min, k_max);
    if (!validated) {
      failure = to_string(validated.error().kind);
    } else {
      boxes = validated.value();
      format_ok = true;
    }
  }

  EpisodeRecord rec;
  if (task == TaskKind::detection) {
    rec = run_detection_episode_with(scene, boxes, format_ok, cfg.sensing, cfg.task_model,
                                     cfg.reward, seed);
  } else {
    rec = run_segmentation_episode_with(scene, boxes, format_ok,
                                        detail::corrupted_for(scene, cfg, seed),
                                        cfg.sensing.budget_k, cfg.sensing, cfg.reward, seed);
  }

  nlohmann::json j;
  j["scene_id"] = scene.scene_id;
  j["format_ok"] = format_ok;
  if (!failure.empty()) j["failure"] = failure;
  j["reward"] = {{"r_format", rec.reward.r_format},
                 {"r_no_overlap", rec.reward.r_no_overlap},
                 {"r_area", rec.reward.r_area},
                 {"r_coverage", rec.reward.r_coverage},
                 {"r_task", rec.reward.r_task},
                 {"heuristic_total", rec.reward.heuristic_total},
                 {"total", rec.reward.total}};
  const std::string body = j.dump(1) + "\n";
  if (out_path.empty()) {
    std::cout << body;
  } else {
    detail::ensure_parent_dir(out_path);
    detail::spit(out_path, body);
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

inline int cmd_print_config(const RunConfig& cfg, std::ostream& os = std::cout) {
  os << dump_config(cfg);
  return 0;
}

}  // namespace zoomrl
