#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "zoomrl/cli.hpp"
#include "zoomrl/config.hpp"

using namespace zoomrl;

namespace {

std::filesystem::path out_root() {
  const auto dir = std::filesystem::temp_directory_path() / "zoomrl_cli_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

// a small fast benchmark config for CLI-level tests
RunConfig tiny_config() {
  RunConfig cfg;
  cfg.gen.width = 512;
  cfg.gen.height = 512;
  cfg.gen.cluster_count = 2;
  cfg.gen.objects_per_cluster = 5;
  cfg.gen.cluster_min_separation = 250;
  cfg.gen.margin = 64;
  cfg.eval.scene_count = 4;
  cfg.grpo.iterations = 5;
  cfg.grpo.scenes_per_iteration = 2;
  return cfg;
}

}  // namespace

TEST_CASE("config precedence: default, file, flag") {
  RunConfig cfg;
  CHECK(cfg.reward.heuristic.tau == 0.3);

  apply_config_text(cfg,
                    "[heuristic]\n"
                    "tau = 0.25\n"
                    "# comment line\n"
                    "[grpo]\n"
                    "kl_beta = 0.1\n");
  CHECK(cfg.reward.heuristic.tau == 0.25);
  CHECK(cfg.grpo.kl_beta == 0.1);

  apply_config_value(cfg, "heuristic.tau", "0.2");  // flag layer wins
  CHECK(cfg.reward.heuristic.tau == 0.2);

  CHECK_THROWS_AS(apply_config_value(cfg, "heuristic.unknown", "1"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(cfg, "[grpo]\nkl_beta == oops\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_value(cfg, "grpo.iterations", "many"), ConfigError);
}

TEST_CASE("dump_config covers every key and reparses to the same state") {
  RunConfig cfg;
  cfg.reward.mode = RewardMode::task;
  cfg.gen.scene_id_prefix = "bench";
  cfg.grpo.learning_rate = 0.125;
  const std::string text = dump_config(cfg);

  RunConfig back;
  apply_config_text(back, text);
  CHECK(dump_config(back) == text);
  CHECK(back.reward.mode == RewardMode::task);
  CHECK(back.gen.scene_id_prefix == "bench");
  CHECK(back.grpo.learning_rate == 0.125);
}

TEST_CASE("gen-scenes writes a loadable file") {
  const auto out = (out_root() / "scenes.json").string();
  cmd_gen_scenes(tiny_config(), out, 3);
  const auto scenes = load_scenes(out);
  CHECK(scenes.size() == 4);
}

TEST_CASE("eval writes per-scene CSV and aggregate JSON deterministically") {
  const RunConfig cfg = tiny_config();
  const auto scenes_path = (out_root() / "eval_scenes.json").string();
  cmd_gen_scenes(cfg, scenes_path, 5);

  const auto out_a = (out_root() / "eval_a").string();
  const auto out_b = (out_root() / "eval_b").string();
  cmd_eval(cfg, scenes_path, "random", out_a, 17);
  cmd_eval(cfg, scenes_path, "random", out_b, 17);
  CHECK(slurp_file(out_a + "/per_scene.csv") == slurp_file(out_b + "/per_scene.csv"));
  CHECK(slurp_file(out_a + "/aggregate.json") == slurp_file(out_b + "/aggregate.json"));
  CHECK(slurp_file(out_a + "/episodes.jsonl") == slurp_file(out_b + "/episodes.jsonl"));

  // a different seed changes the random policy's episodes
  const auto out_c = (out_root() / "eval_c").string();
  cmd_eval(cfg, scenes_path, "random", out_c, 18);
  CHECK(slurp_file(out_a + "/episodes.jsonl") != slurp_file(out_c + "/episodes.jsonl"));

  const std::string csv = slurp_file(out_a + "/per_scene.csv");
  CHECK(csv.find("scene_id,sample,r_format") != std::string::npos);
  CHECK(csv.find(",ap,ar") != std::string::npos);               // detection metric columns
  CHECK(csv.find("\naggregate,-,") != std::string::npos);       // mean row at the bottom
  CHECK(csv.find("# policy = random, seed = 17") != std::string::npos);
  CHECK(csv.find("heuristic.tau = 0.3") != std::string::npos);  // config provenance header
}

TEST_CASE("train writes a report and a loadable snapshot, deterministically") {
  const RunConfig cfg = tiny_config();
  const auto scenes_path = (out_root() / "train_scenes.json").string();
  cmd_gen_scenes(cfg, scenes_path, 5);

  const auto out_a = (out_root() / "train_a").string();
  const auto out_b = (out_root() / "train_b").string();
  cmd_train(cfg, scenes_path, out_a, 99);
  cmd_train(cfg, scenes_path, out_b, 99);
  CHECK(slurp_file(out_a + "/train_report.csv") == slurp_file(out_b + "/train_report.csv"));
  CHECK(slurp_file(out_a + "/snapshot.json") == slurp_file(out_b + "/snapshot.json"));

  const AnchorGridPolicy trained = load_policy_snapshot(out_a + "/snapshot.json");
  CHECK(trained.ref_w == 512);

  const auto eval_out = (out_root() / "train_eval").string();
  cmd_eval(cfg, scenes_path, "trained:" + out_a + "/snapshot.json", eval_out, 1);
}

TEST_CASE("segmentation eval emits a non-decreasing oracle budget curve") {
  RunConfig cfg = tiny_config();
  cfg.eval.task = "segment";
  cfg.gen.with_mask = true;
  cfg.gen.object_min_side = 12;
  cfg.gen.object_max_side = 28;
  cfg.gen.cluster_radius = 40;
  const auto scenes_path = (out_root() / "seg_scenes.json").string();
  cmd_gen_scenes(cfg, scenes_path, 5);

  const auto out = (out_root() / "seg_eval").string();
  const EvalSummary summary = cmd_eval(cfg, scenes_path, "oracle", out, 3);
  REQUIRE(summary.budget_curve.size() == 4);
  for (std::size_t b = 1; b < summary.budget_curve.size(); ++b)
    CHECK(summary.budget_curve[b] >= summary.budget_curve[b - 1]);

  const std::string csv = slurp_file(out + "/budget_curve.csv");
  int rows = 0;
  std::istringstream lines(csv);
  std::string line;
  while (std::getline(lines, line))
    if (!line.empty() && line[0] != '#' && line.find("budget") == std::string::npos) ++rows;
  CHECK(rows == 4);
  CHECK(std::filesystem::exists(out + "/budget_curve.svg"));
}

TEST_CASE("score on fixtures") {
  RunConfig cfg = tiny_config();
  const auto scenes_path = (out_root() / "score_scenes.json").string();
  cmd_gen_scenes(cfg, scenes_path, 5);
  const auto scenes = load_scenes(scenes_path);

  SECTION("valid response earns the format reward") {
    const auto resp = (out_root() / "resp_ok.txt").string();
    write_text(resp, "<think>center</think><answer>[{\"bbox_2d\":[100,100,355,355],"
                     "\"label\":\"target-dense region\"}]</answer>");
    const auto out = (out_root() / "score_ok.json").string();
    cmd_score(cfg, resp, scenes_path, out, 1);
    const auto j = nlohmann::json::parse(slurp_file(out));
    CHECK(j["format_ok"].get<bool>());
    CHECK(j["reward"]["r_format"].get<double>() == 1.0);
  }

  SECTION("garbage yields an all-zero breakdown, not an error") {
    const auto resp = (out_root() / "resp_bad.txt").string();
    write_text(resp, "complete nonsense");
    const auto out = (out_root() / "score_bad.json").string();
    CHECK(cmd_score(cfg, resp, scenes_path, out, 1) == 0);
    const auto j = nlohmann::json::parse(slurp_file(out));
    CHECK_FALSE(j["format_ok"].get<bool>());
    CHECK(j["failure"].get<std::string>() == "MissingThink");
    CHECK(j["reward"]["total"].get<double>() == 0.0);
  }

  SECTION("overlapping pair at IoU 1/3 zeroes the no-overlap component") {
    const auto resp = (out_root() / "resp_overlap.txt").string();
    write_text(resp, "<think>t</think><answer>[{\"bbox_2d\":[0,0,99,99]},"
                     "{\"bbox_2d\":[50,0,149,99]}]</answer>");
    const auto out = (out_root() / "score_overlap.json").string();
    cmd_score(cfg, resp, scenes_path, out, 1);
    const auto j = nlohmann::json::parse(slurp_file(out));
    CHECK(j["reward"]["r_format"].get<double>() == 1.0);
    CHECK(j["reward"]["r_no_overlap"].get<double>() == 0.0);
  }
}

TEST_CASE("make_policy specs") {
  const RunConfig cfg = tiny_config();
  CHECK(make_policy("random", cfg)->name() == "random");
  CHECK(make_policy("grid", cfg)->name() == "grid");
  CHECK(make_policy("oracle", cfg)->name() == "oracle");
  CHECK(make_policy("external", cfg)->name() == "external");
  CHECK_THROWS_AS(make_policy("nonsense", cfg), UsageError);
  CHECK_THROWS_AS(make_policy("trained:", cfg), UsageError);
}

TEST_CASE("CLI binary exit codes") {
  const std::string cli = ZOOMRL_CLI_PATH;
  const auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };
  CHECK(run("print-config") == 0);
  CHECK(run("") == 1);  // missing subcommand
  CHECK(run("eval --policy nonsense --out /tmp/zoomrl_cli_unused2") == 1);
  CHECK(run("eval --scenes /nonexistent.json --policy random --out /tmp/zoomrl_cli_unused3") == 2);
  CHECK(run("score --response /nonexistent.txt --scenes /nonexistent.json") == 2);
  CHECK(run("print-config --config /nonexistent.cfg") == 1);
}
