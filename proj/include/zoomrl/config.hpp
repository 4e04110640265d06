#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "zoomrl/environment.hpp"
#include "zoomrl/external_policy.hpp"
#include "zoomrl/grpo.hpp"
#include "zoomrl/report.hpp"
#include "zoomrl/scene.hpp"

namespace zoomrl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Evaluation-side knobs that are not owned by any single module.
struct EvalConfig {
  std::string task = "detect";  // detect | segment
  double iou_thr = 0.5;
  int grid_side = 2;
  int policy_k = 3;
  int samples_per_scene = 1;
  int scene_count = 50;  // used when scenes are generated rather than loaded
};

// Every tunable in one place. Values flow in three layers: built-in
// defaults, then a config file, then command-line flags.
struct RunConfig {
  SceneGenConfig gen;
  SensingConfig sensing;
  TaskModelConfig task_model;
  RewardConfig reward;
  GrpoConfig grpo;
  CorruptionConfig corruption;
  EndpointConfig endpoint;
  EvalConfig eval;
};

namespace detail {

struct ConfigField {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline int parse_int(const std::string& v) {
  int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw ConfigError("expected an integer, got '" + v + "'");
  return out;
}

inline double parse_double(const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw ConfigError("");
    return out;
  } catch (...) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true/false, got '" + v + "'");
}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    const auto add_int = [&f](const std::string& key, auto getter) {
      f.push_back({key, [getter](const RunConfig& c) { return std::to_string(*getter(const_cast<RunConfig&>(c))); },
                   [getter](RunConfig& c, const std::string& v) { *getter(c) = parse_int(v); }});
    };
    const auto add_double = [&f](const std::string& key, auto getter) {
      f.push_back({key, [getter](const RunConfig& c) { return fmt_num(*getter(const_cast<RunConfig&>(c))); },
                   [getter](RunConfig& c, const std::string& v) { *getter(c) = parse_double(v); }});
    };
    const auto add_bool = [&f](const std::string& key, auto getter) {
      f.push_back({key,
                   [getter](const RunConfig& c) {
                     return *getter(const_cast<RunConfig&>(c)) ? std::string("true") : std::string("false");
                   },
                   [getter](RunConfig& c, const std::string& v) { *getter(c) = parse_bool(v); }});
    };
    const auto add_string = [&f](const std::string& key, auto getter) {
      f.push_back({key, [getter](const RunConfig& c) { return *getter(const_cast<RunConfig&>(c)); },
                   [getter](RunConfig& c, const std::string& v) { *getter(c) = v; }});
    };

    // gen
    add_int("gen.width", [](RunConfig& c) { return &c.gen.width; });
    add_int("gen.height", [](RunConfig& c) { return &c.gen.height; });
    add_int("gen.cluster_count", [](RunConfig& c) { return &c.gen.cluster_count; });
    add_int("gen.objects_per_cluster", [](RunConfig& c) { return &c.gen.objects_per_cluster; });
    add_int("gen.object_min_side", [](RunConfig& c) { return &c.gen.object_min_side; });
    add_int("gen.object_max_side", [](RunConfig& c) { return &c.gen.object_max_side; });
    add_int("gen.cluster_radius", [](RunConfig& c) { return &c.gen.cluster_radius; });
    add_int("gen.cluster_min_separation",
            [](RunConfig& c) { return &c.gen.cluster_min_separation; });
    add_int("gen.margin", [](RunConfig& c) { return &c.gen.margin; });
    add_int("gen.distractor_count", [](RunConfig& c) { return &c.gen.distractor_count; });
    add_int("gen.distractor_min_side", [](RunConfig& c) { return &c.gen.distractor_min_side; });
    add_int("gen.distractor_max_side", [](RunConfig& c) { return &c.gen.distractor_max_side; });
    add_bool("gen.with_mask", [](RunConfig& c) { return &c.gen.with_mask; });
    add_bool("gen.shared_layout", [](RunConfig& c) { return &c.gen.shared_layout; });
    add_string("gen.scene_id_prefix", [](RunConfig& c) { return &c.gen.scene_id_prefix; });

    // sensing
    add_int("sensing.budget_k", [](RunConfig& c) { return &c.sensing.budget_k; });
    add_int("sensing.init_shorter_side", [](RunConfig& c) { return &c.sensing.init_shorter_side; });
    add_int("sensing.crop_resolution", [](RunConfig& c) { return &c.sensing.crop_resolution; });
    add_int("sensing.k_parallel", [](RunConfig& c) { return &c.sensing.k_parallel; });

    // task model
    add_double("task_model.min_apparent_area",
               [](RunConfig& c) { return &c.task_model.min_apparent_area; });
    add_double("task_model.miss_rate", [](RunConfig& c) { return &c.task_model.miss_rate; });
    add_double("task_model.jitter_sigma", [](RunConfig& c) { return &c.task_model.jitter_sigma; });
    add_double("task_model.score_saturation",
               [](RunConfig& c) { return &c.task_model.score_saturation; });

    // heuristic reward
    add_double("heuristic.tau", [](RunConfig& c) { return &c.reward.heuristic.tau; });
    add_double("heuristic.r_min", [](RunConfig& c) { return &c.reward.heuristic.r_min; });
    add_double("heuristic.r_max", [](RunConfig& c) { return &c.reward.heuristic.r_max; });
    add_double("heuristic.theta", [](RunConfig& c) { return &c.reward.heuristic.theta; });
    add_double("heuristic.delta", [](RunConfig& c) { return &c.reward.heuristic.delta; });
    add_double("heuristic.lambda_format",
               [](RunConfig& c) { return &c.reward.heuristic.lambda[0]; });
    add_double("heuristic.lambda_no_overlap",
               [](RunConfig& c) { return &c.reward.heuristic.lambda[1]; });
    add_double("heuristic.lambda_area", [](RunConfig& c) { return &c.reward.heuristic.lambda[2]; });
    add_double("heuristic.lambda_coverage",
               [](RunConfig& c) { return &c.reward.heuristic.lambda[3]; });
    add_bool("heuristic.coverage_use_dice",
             [](RunConfig& c) { return &c.reward.heuristic.coverage_use_dice; });

    // reward combination
    f.push_back({"reward.mode",
                 [](const RunConfig& c) { return std::string(to_string(c.reward.mode)); },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "task")
                     c.reward.mode = RewardMode::task;
                   else if (v == "heuristic")
                     c.reward.mode = RewardMode::heuristic;
                   else if (v == "combined")
                     c.reward.mode = RewardMode::combined;
                   else
                     throw ConfigError("unknown reward mode '" + v + "'");
                 }});
    add_double("reward.w_heuristic", [](RunConfig& c) { return &c.reward.w_heuristic; });
    add_double("reward.w_task", [](RunConfig& c) { return &c.reward.w_task; });
    add_double("reward.nms_iou", [](RunConfig& c) { return &c.reward.nms_iou; });

    // grpo
    add_int("grpo.group_size_n", [](RunConfig& c) { return &c.grpo.group_size_n; });
    add_double("grpo.clip_eps", [](RunConfig& c) { return &c.grpo.clip_eps; });
    add_double("grpo.kl_beta", [](RunConfig& c) { return &c.grpo.kl_beta; });
    add_double("grpo.learning_rate", [](RunConfig& c) { return &c.grpo.learning_rate; });
    add_int("grpo.iterations", [](RunConfig& c) { return &c.grpo.iterations; });
    add_int("grpo.scenes_per_iteration",
            [](RunConfig& c) { return &c.grpo.scenes_per_iteration; });
    add_double("grpo.std_floor", [](RunConfig& c) { return &c.grpo.std_floor; });
    add_int("grpo.inner_updates", [](RunConfig& c) { return &c.grpo.inner_updates; });

    // corruption
    add_int("corruption.dilate_band", [](RunConfig& c) { return &c.corruption.dilate_band; });
    add_int("corruption.erode_band", [](RunConfig& c) { return &c.corruption.erode_band; });
    add_int("corruption.blob_count", [](RunConfig& c) { return &c.corruption.blob_count; });
    add_int("corruption.blob_min_side", [](RunConfig& c) { return &c.corruption.blob_min_side; });
    add_int("corruption.blob_max_side", [](RunConfig& c) { return &c.corruption.blob_max_side; });
    add_bool("corruption.blobs_on_boundary",
             [](RunConfig& c) { return &c.corruption.blobs_on_boundary; });

    // endpoint
    add_string("endpoint.url", [](RunConfig& c) { return &c.endpoint.url; });
    add_string("endpoint.model", [](RunConfig& c) { return &c.endpoint.model; });
    add_double("endpoint.temperature", [](RunConfig& c) { return &c.endpoint.temperature; });
    add_int("endpoint.max_tokens", [](RunConfig& c) { return &c.endpoint.max_tokens; });
    add_double("endpoint.timeout_s", [](RunConfig& c) { return &c.endpoint.timeout_s; });
    add_int("endpoint.retries", [](RunConfig& c) { return &c.endpoint.retries; });
    add_string("endpoint.auth_token_env", [](RunConfig& c) { return &c.endpoint.auth_token_env; });
    add_string("endpoint.object_name", [](RunConfig& c) { return &c.endpoint.object_name; });

    // eval
    add_string("eval.task", [](RunConfig& c) { return &c.eval.task; });
    add_double("eval.iou_thr", [](RunConfig& c) { return &c.eval.iou_thr; });
    add_int("eval.grid_side", [](RunConfig& c) { return &c.eval.grid_side; });
    add_int("eval.policy_k", [](RunConfig& c) { return &c.eval.policy_k; });
    add_int("eval.samples_per_scene", [](RunConfig& c) { return &c.eval.samples_per_scene; });
    add_int("eval.scene_count", [](RunConfig& c) { return &c.eval.scene_count; });
    return f;
  }();
  return fields;
}

}  // namespace detail

// Applies "section.key=value"; unknown keys are configuration errors.
inline void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& field : detail::config_fields()) {
    if (field.key == key) {
      field.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

// Flat sectioned key-value text:
//   [section]
//   key = value
// Comment lines start with '#'.
inline void apply_config_text(RunConfig& cfg, const std::string& text,
                              const std::string& origin = "<config>") {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = strip(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = strip(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    apply_config_value(cfg, section.empty() ? key : section + "." + key, value);
  }
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw ConfigError("cannot open config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  apply_config_text(cfg, os.str(), path);
}

// Dumps the effective config in file syntax, grouped by section, stable
// field order.
inline std::string dump_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& field : detail::config_fields()) {
    const auto dot = field.key.find('.');
    const std::string sec = field.key.substr(0, dot);
    if (sec != section) {
      if (!out.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += field.key.substr(dot + 1) + " = " + field.get(cfg) + "\n";
  }
  return out;
}

// One-line-per-key form for CSV report headers.
inline std::vector<std::string> config_comment_lines(const RunConfig& cfg) {
  std::vector<std::string> lines;
  for (const auto& field : detail::config_fields()) lines.push_back(field.key + " = " + field.get(cfg));
  return lines;
}

}  // namespace zoomrl
