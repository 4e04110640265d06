#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "zoomrl/grpo.hpp"
#include "zoomrl/policy.hpp"
#include "zoomrl/rng.hpp"

using namespace zoomrl;

namespace {

// small hand-built policy: two anchors, k = 1
AnchorGridPolicy bandit_policy() {
  AnchorGridPolicy p;
  p.anchors = {BBox(0, 0, 99, 99), BBox(100, 0, 199, 99)};
  p.logits = {0.0, 0.0};
  p.ref_w = 200;
  p.ref_h = 100;
  p.k = 1;
  return p;
}

AnchorGridPolicy toy_policy(int n_anchors, int k, Rng& rng, double spread = 1.0) {
  AnchorGridPolicy p;
  for (int i = 0; i < n_anchors; ++i) p.anchors.push_back(BBox(i * 10, 0, i * 10 + 9, 9));
  p.logits.resize(n_anchors);
  for (auto& l : p.logits) l = (rng.uniform01() * 2.0 - 1.0) * spread;
  p.ref_w = n_anchors * 10;
  p.ref_h = 10;
  p.k = k;
  return p;
}

std::vector<GroupSample> random_group(const AnchorGridPolicy& policy, int n, Rng& rng,
                                      double behavior_noise, double std_floor) {
  std::vector<GroupSample> group;
  std::vector<double> rewards;
  for (int i = 0; i < n; ++i) {
    GroupSample s;
    double lp;
    s.anchor_indices = plackett_luce_sample(policy.logits, policy.k, rng, &lp);
    s.logp_behavior = lp + (rng.uniform01() * 2.0 - 1.0) * behavior_noise;
    s.logp_reference = plackett_luce_log_prob(policy.logits, s.anchor_indices) +
                       (rng.uniform01() * 2.0 - 1.0) * behavior_noise;
    s.reward = std::floor(rng.uniform01() * 5.0);
    rewards.push_back(s.reward);
    group.push_back(std::move(s));
  }
  const auto adv = advantages(rewards, std_floor);
  for (std::size_t i = 0; i < group.size(); ++i) group[i].advantage = adv[i];
  return group;
}

}  // namespace

TEST_CASE("advantages examples") {
  const std::vector<double> r = {1.0, 2.0, 3.0};
  const auto a = advantages(r, 1e-8);
  const double want = 1.0 / std::sqrt(2.0 / 3.0);
  CHECK(a[0] == Catch::Approx(-want).epsilon(1e-12));
  CHECK(a[1] == Catch::Approx(0.0).margin(1e-12));
  CHECK(a[2] == Catch::Approx(want).epsilon(1e-12));

  const std::vector<double> equal = {5.0, 5.0, 5.0, 5.0};
  CHECK(advantages(equal, 1e-8) == std::vector<double>{0.0, 0.0, 0.0, 0.0});

  CHECK_THROWS_AS(advantages(std::vector<double>{1.0}, 1e-8), std::invalid_argument);
  CHECK_THROWS_AS(advantages(std::vector<double>{1.0, std::nan("")}, 1e-8),
                  std::invalid_argument);
}

TEST_CASE("advantages are normalized to mean zero and unit std") {
  Rng rng(42);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = static_cast<int>(rng.uniform_range(2, 16));
    std::vector<double> r(n);
    for (auto& v : r) v = rng.uniform01() * 10.0 - 5.0;
    const auto a = advantages(r, 1e-8);
    double mean = 0.0, var = 0.0;
    for (double v : a) mean += v;
    mean /= n;
    for (double v : a) var += (v - mean) * (v - mean);
    const double std = std::sqrt(var / n);
    const bool degenerate = std::all_of(a.begin(), a.end(), [](double v) { return v == 0.0; });
    REQUIRE(std::abs(mean) <= 1e-14);
    if (!degenerate) REQUIRE(std::abs(std - 1.0) <= 1e-12);
  }
}

TEST_CASE("advantages are invariant under reward shift and positive scaling") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng.uniform_range(2, 10));
    std::vector<double> r(n);
    for (auto& v : r) v = rng.uniform01() * 4.0;
    const auto base = advantages(r, 1e-8);

    // power-of-two scaling commutes with every fp operation involved
    std::vector<double> scaled2 = r;
    for (auto& v : scaled2) v *= 4.0;
    REQUIRE(advantages(scaled2, 1e-8) == base);

    const double c = 0.1 + rng.uniform01() * 9.0;
    const double s = rng.uniform01() * 20.0 - 10.0;
    std::vector<double> affine = r;
    for (auto& v : affine) v = c * v + s;
    const auto got = advantages(affine, 1e-8);
    for (int i = 0; i < n; ++i) REQUIRE(got[i] == Catch::Approx(base[i]).margin(1e-9));
  }
}

TEST_CASE("surrogate at theta == theta_old") {
  Rng rng(12);
  AnchorGridPolicy policy = toy_policy(6, 2, rng);
  GrpoConfig cfg;
  cfg.group_size_n = 4;

  // behavior and reference both equal the current policy: w = 1, KL = 0
  std::vector<GroupSample> group;
  std::vector<double> rewards;
  for (int i = 0; i < 4; ++i) {
    GroupSample s;
    s.anchor_indices = plackett_luce_sample(policy.logits, policy.k, rng, &s.logp_behavior);
    s.logp_reference = s.logp_behavior;
    s.reward = static_cast<double>(i);
    rewards.push_back(s.reward);
    group.push_back(std::move(s));
  }
  const auto adv = advantages(rewards, cfg.std_floor);
  for (std::size_t i = 0; i < group.size(); ++i) group[i].advantage = adv[i];

  const SurrogateResult res = surrogate(policy, group, cfg);
  // objective = mean(A) - beta * 0 = 0 up to fp dust
  CHECK(std::abs(res.objective) <= 1e-12);
  CHECK(res.kl <= 1e-15);

  // gradient reduces to (1/N) sum A_n grad log pi
  std::vector<double> want(policy.logits.size(), 0.0);
  for (const auto& s : group) {
    const auto g = plackett_luce_grad(policy.logits, s.anchor_indices);
    for (std::size_t i = 0; i < want.size(); ++i) want[i] += s.advantage * g[i] / 4.0;
  }
  for (std::size_t i = 0; i < want.size(); ++i)
    CHECK(res.grad[i] == Catch::Approx(want[i]).margin(1e-12));
}

TEST_CASE("clipping freezes the policy-gradient branch") {
  AnchorGridPolicy policy = bandit_policy();
  GrpoConfig cfg;
  cfg.kl_beta = 0.0;
  cfg.clip_eps = 0.2;

  GroupSample s;
  s.anchor_indices = {0};
  const double logp_cur = plackett_luce_log_prob(policy.logits, s.anchor_indices);
  s.logp_behavior = logp_cur - std::log(1.5);  // w = 1.5
  s.logp_reference = logp_cur;
  s.advantage = 1.0;
  GroupSample other = s;  // a second member so the group is well formed
  other.anchor_indices = {1};
  const double logp_other = plackett_luce_log_prob(policy.logits, other.anchor_indices);
  other.logp_behavior = logp_other;
  other.logp_reference = logp_other;
  other.advantage = 0.0;

  const std::vector<GroupSample> group = {s, other};
  const SurrogateResult res = surrogate(policy, group, cfg);
  // clipped contribution: min(1.5 * 1, 1.2 * 1) = 1.2; other sample adds 0
  CHECK(res.objective == Catch::Approx(1.2 / 2.0).epsilon(1e-12));
  // the clipped sample must not push gradient through the ratio
  for (double v : res.grad) CHECK(v == 0.0);
}

TEST_CASE("KL estimator is non-negative and zero at the reference") {
  Rng rng(3);
  AnchorGridPolicy policy = toy_policy(5, 2, rng);
  GrpoConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    const auto group = random_group(policy, 4, rng, 0.4, cfg.std_floor);
    for (const auto& s : group) {
      const double logp_cur = plackett_luce_log_prob(policy.logits, s.anchor_indices);
      const double d = s.logp_reference - logp_cur;
      const double kl = std::exp(d) - d - 1.0;
      REQUIRE(kl >= 0.0);
      if (s.logp_reference == logp_cur) REQUIRE(kl == 0.0);
    }
    REQUIRE(surrogate(policy, group, cfg).kl >= 0.0);
  }
}

TEST_CASE("surrogate gradient matches finite differences") {
  Rng rng(1001);
  GrpoConfig cfg;
  cfg.group_size_n = 4;
  for (double beta : {0.0, 0.04}) {
    cfg.kl_beta = beta;
    double worst = 0.0;
    int batches = 0;
    while (batches < 100) {
      AnchorGridPolicy policy = toy_policy(static_cast<int>(rng.uniform_range(4, 9)),
                                           static_cast<int>(rng.uniform_range(1, 3)), rng);
      std::vector<std::vector<GroupSample>> groups;
      bool near_boundary = false;
      for (int g = 0; g < 3; ++g) {
        auto group = random_group(policy, 4, rng, 0.3, cfg.std_floor);
        for (const auto& s : group) {
          const double w = std::exp(plackett_luce_log_prob(policy.logits, s.anchor_indices) -
                                    s.logp_behavior);
          if (std::abs(w - (1.0 - cfg.clip_eps)) < 1e-3 ||
              std::abs(w - (1.0 + cfg.clip_eps)) < 1e-3)
            near_boundary = true;
        }
        groups.push_back(std::move(group));
      }
      if (near_boundary) continue;  // the objective is not differentiable there
      worst = std::max(worst, grad_check(policy, groups, cfg));
      ++batches;
    }
    REQUIRE(worst <= 1e-5);
  }
}

TEST_CASE("train with zero learning rate is a no-op") {
  Rng rng(5);
  AnchorGridPolicy policy = bandit_policy();
  policy.logits = {0.3, -0.2};
  const auto before = policy.logits;

  std::vector<Scene> scenes(1);
  scenes[0].width = 200;
  scenes[0].height = 100;
  scenes[0].scene_id = "bandit";

  GrpoConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.iterations = 10;
  cfg.scenes_per_iteration = 1;
  cfg.kl_beta = 0.0;

  const auto reward_fn = [&](const Scene&, const PolicyOutput& out, std::uint64_t) {
    return out.proposals[0] == BBox(0, 0, 99, 99) ? 1.0 : 0.0;
  };
  train(scenes, policy, reward_fn, cfg, 77);
  CHECK(policy.logits == before);
}

TEST_CASE("two-anchor bandit converges") {
  AnchorGridPolicy policy = bandit_policy();

  std::vector<Scene> scenes(1);
  scenes[0].width = 200;
  scenes[0].height = 100;
  scenes[0].scene_id = "bandit";

  GrpoConfig cfg;
  cfg.kl_beta = 0.0;
  cfg.iterations = 200;
  cfg.scenes_per_iteration = 1;
  cfg.learning_rate = 0.2;

  const auto reward_fn = [&](const Scene&, const PolicyOutput& out, std::uint64_t) {
    return out.proposals[0] == BBox(0, 0, 99, 99) ? 1.0 : 0.0;
  };
  const TrainReport report = train(scenes, policy, reward_fn, cfg, 123);
  const double pa = std::exp(plackett_luce_log_prob(policy.logits, std::vector<int>{0}));
  CHECK(pa > 0.99);
  CHECK(report.rows.size() == 200);
  CHECK(report.rows.back().mean_reward > report.rows.front().mean_reward);
}

TEST_CASE("multi-update mode exercises the ratio machinery and still learns") {
  AnchorGridPolicy policy = bandit_policy();
  std::vector<Scene> scenes(1);
  scenes[0].width = 200;
  scenes[0].height = 100;
  scenes[0].scene_id = "bandit";

  GrpoConfig cfg;
  cfg.kl_beta = 0.0;
  cfg.iterations = 120;
  cfg.scenes_per_iteration = 1;
  cfg.learning_rate = 0.2;
  cfg.inner_updates = 3;  // behavior policy stays frozen across the inner steps

  const auto reward_fn = [&](const Scene&, const PolicyOutput& out, std::uint64_t) {
    return out.proposals[0] == BBox(0, 0, 99, 99) ? 1.0 : 0.0;
  };
  const TrainReport report = train(scenes, policy, reward_fn, cfg, 321);
  REQUIRE(report.rows.size() == 120);
  for (const auto& row : report.rows) {
    REQUIRE(std::isfinite(row.surrogate));
    REQUIRE(std::isfinite(row.grad_norm));
  }
  const double pa = std::exp(plackett_luce_log_prob(policy.logits, std::vector<int>{0}));
  CHECK(pa > 0.95);
}

TEST_CASE("training is deterministic given the seed") {
  const auto run = [] {
    AnchorGridPolicy policy = bandit_policy();
    std::vector<Scene> scenes(1);
    scenes[0].width = 200;
    scenes[0].height = 100;
    scenes[0].scene_id = "bandit";
    GrpoConfig cfg;
    cfg.iterations = 25;
    cfg.scenes_per_iteration = 1;
    const auto reward_fn = [](const Scene&, const PolicyOutput& out, std::uint64_t seed) {
      Rng rng(seed);
      return (out.proposals[0] == BBox(0, 0, 99, 99) ? 1.0 : 0.0) + rng.uniform01() * 0.1;
    };
    return train(scenes, policy, reward_fn, cfg, 2024);
  };
  const TrainReport a = run();
  const TrainReport b = run();
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    REQUIRE(a.rows[i].mean_reward == b.rows[i].mean_reward);
    REQUIRE(a.rows[i].max_reward == b.rows[i].max_reward);
    REQUIRE(a.rows[i].surrogate == b.rows[i].surrogate);
    REQUIRE(a.rows[i].kl == b.rows[i].kl);
    REQUIRE(a.rows[i].grad_norm == b.rows[i].grad_norm);
  }
  REQUIRE(a.final_logits == b.final_logits);
}

TEST_CASE("non-finite rewards abort with a diagnostic") {
  AnchorGridPolicy policy = bandit_policy();
  std::vector<Scene> scenes(1);
  scenes[0].width = 200;
  scenes[0].height = 100;
  scenes[0].scene_id = "bandit";
  GrpoConfig cfg;
  cfg.iterations = 1;
  cfg.scenes_per_iteration = 1;
  const auto reward_fn = [](const Scene&, const PolicyOutput&, std::uint64_t) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(train(scenes, policy, reward_fn, cfg, 1), std::invalid_argument);
}

TEST_CASE("config validation") {
  GrpoConfig bad;
  bad.group_size_n = 1;
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
  bad = {};
  bad.clip_eps = 1.5;
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
  bad = {};
  bad.kl_beta = -0.1;
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
}
