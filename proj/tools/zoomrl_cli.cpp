// Command-line front end: scene generation, policy evaluation, GRPO
// training, single-response scoring, and config inspection.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime abort.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "zoomrl/cli.hpp"

namespace {

struct CommonOpts {
  std::uint64_t seed = 0;
  std::string config_path;
  std::optional<int> budget;
  std::optional<double> iou_thr;
  std::optional<std::string> reward_mode;
  std::optional<std::string> endpoint_url;
  std::optional<std::string> task;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--seed", opts.seed, "deterministic run seed");
  cmd->add_option("--config", opts.config_path, "config file (section.key = value)");
  cmd->add_option("--budget", opts.budget, "sensing budget per episode (sensing.budget_k)");
  cmd->add_option("--iou-thr", opts.iou_thr, "report IoU threshold (eval.iou_thr)");
  cmd->add_option("--reward-mode", opts.reward_mode, "task | heuristic | combined (reward.mode)");
  cmd->add_option("--endpoint-url", opts.endpoint_url, "external model endpoint (endpoint.url)");
  cmd->add_option("--task", opts.task, "detect | segment (eval.task)");
}

// layering: defaults, then config file, then explicit flags
zoomrl::RunConfig effective_config(const CommonOpts& opts) {
  zoomrl::RunConfig cfg;
  if (!opts.config_path.empty()) zoomrl::apply_config_file(cfg, opts.config_path);
  if (opts.budget) zoomrl::apply_config_value(cfg, "sensing.budget_k", std::to_string(*opts.budget));
  if (opts.iou_thr) zoomrl::apply_config_value(cfg, "eval.iou_thr", zoomrl::fmt_num(*opts.iou_thr));
  if (opts.reward_mode) zoomrl::apply_config_value(cfg, "reward.mode", *opts.reward_mode);
  if (opts.endpoint_url) zoomrl::apply_config_value(cfg, "endpoint.url", *opts.endpoint_url);
  if (opts.task) zoomrl::apply_config_value(cfg, "eval.task", *opts.task);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"active-perception sensing-policy harness"};
  app.require_subcommand(1);

  CommonOpts gen_opts, eval_opts, train_opts, score_opts, print_opts;
  std::string gen_out, eval_out, train_out, score_out;
  std::string eval_scenes, train_scenes, score_scenes, score_response;
  std::string eval_policy = "random";
  std::string gen_from_coco, gen_rule = "all";
  int gen_cap = 0;

  auto* gen = app.add_subcommand("gen-scenes",
                                 "write a scene file (synthetic, or imported from COCO JSON)");
  add_common(gen, gen_opts);
  gen->add_option("--out", gen_out, "output scene JSON path")->required();
  gen->add_option("--from-coco", gen_from_coco, "import a COCO-style JSON instead of generating");
  gen->add_option("--select-rule", gen_rule, "small | dense | all (with --from-coco)");
  gen->add_option("--category-cap", gen_cap, "max scenes per category, 0 = uncapped");

  auto* eval = app.add_subcommand("eval", "run a policy over scenes and write reports");
  add_common(eval, eval_opts);
  eval->add_option("--scenes", eval_scenes, "scene file (omit to generate)");
  eval->add_option("--policy", eval_policy,
                   "random | grid | oracle | external | trained:<snapshot>");
  eval->add_option("--out", eval_out, "output directory")->required();

  auto* train = app.add_subcommand("train", "optimize the anchor policy with GRPO");
  add_common(train, train_opts);
  train->add_option("--scenes", train_scenes, "scene file (omit to generate)");
  train->add_option("--out", train_out, "output directory")->required();

  auto* score = app.add_subcommand("score", "score one raw response against a scene");
  add_common(score, score_opts);
  score->add_option("--response", score_response, "raw response text file")->required();
  score->add_option("--scenes", score_scenes, "scene file (first scene is used)")->required();
  score->add_option("--out", score_out, "output JSON path (default stdout)");

  auto* print = app.add_subcommand("print-config", "dump the effective configuration");
  add_common(print, print_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed())
      return zoomrl::cmd_gen_scenes(effective_config(gen_opts), gen_out, gen_opts.seed,
                                    gen_from_coco, gen_rule, gen_cap);
    if (eval->parsed()) {
      zoomrl::cmd_eval(effective_config(eval_opts), eval_scenes, eval_policy, eval_out,
                       eval_opts.seed);
      return 0;
    }
    if (train->parsed()) {
      zoomrl::cmd_train(effective_config(train_opts), train_scenes, train_out, train_opts.seed);
      return 0;
    }
    if (score->parsed())
      return zoomrl::cmd_score(effective_config(score_opts), score_response, score_scenes,
                               score_out, score_opts.seed);
    if (print->parsed()) return zoomrl::cmd_print_config(effective_config(print_opts));
    return 1;
  } catch (const zoomrl::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const zoomrl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const zoomrl::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime abort: " << e.what() << "\n";
    return 3;
  }
}
