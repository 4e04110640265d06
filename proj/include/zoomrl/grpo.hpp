#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "zoomrl/policy.hpp"
#include "zoomrl/rng.hpp"
#include "zoomrl/scene.hpp"

namespace zoomrl {

struct GrpoConfig {
  int group_size_n = 8;
  double clip_eps = 0.2;
  double kl_beta = 0.04;
  double learning_rate = 0.6;
  int iterations = 500;
  int scenes_per_iteration = 8;
  double std_floor = 1e-8;
  // Single inner update keeps the behavior policy equal to the current one
  // (w_n = 1 exactly); more updates re-walk the same groups under a frozen
  // behavior policy, which is where the clipping starts to matter.
  int inner_updates = 1;

  void check() const {
    if (group_size_n < 2) throw std::invalid_argument("GrpoConfig: group_size_n < 2");
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw std::invalid_argument("GrpoConfig: clip_eps");
    if (kl_beta < 0.0) throw std::invalid_argument("GrpoConfig: kl_beta < 0");
    if (learning_rate < 0.0) throw std::invalid_argument("GrpoConfig: learning_rate < 0");
    if (iterations < 0 || scenes_per_iteration < 1)
      throw std::invalid_argument("GrpoConfig: iteration counts");
    if (std_floor <= 0.0) throw std::invalid_argument("GrpoConfig: std_floor");
    if (inner_updates < 1) throw std::invalid_argument("GrpoConfig: inner_updates < 1");
  }
};

// Group-normalized advantages: center by the group mean and scale by the
// population standard deviation. A group whose rewards are (numerically)
// constant carries no signal and gets all-zero advantages.
inline std::vector<double> advantages(std::span<const double> rewards, double std_floor) {
  const std::size_t n = rewards.size();
  if (n < 2) throw std::invalid_argument("advantages: need at least 2 rewards");
  double mean = 0.0;
  for (double r : rewards) {
    if (!std::isfinite(r)) throw std::invalid_argument("advantages: non-finite reward");
    mean += r;
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std = std::sqrt(var / static_cast<double>(n));
  std::vector<double> out(n, 0.0);
  if (std < std_floor) return out;
  for (std::size_t i = 0; i < n; ++i) out[i] = (rewards[i] - mean) / std;
  // one recentering pass so the output mean is zero to machine precision
  double m2 = 0.0;
  for (double a : out) m2 += a;
  m2 /= static_cast<double>(n);
  for (double& a : out) a -= m2;
  return out;
}

// One group member: the sampled selection, its reward, and the
// log-probabilities frozen at sampling time.
struct GroupSample {
  std::vector<int> anchor_indices;
  double reward = 0.0;
  double logp_behavior = 0.0;
  double logp_reference = 0.0;
  double advantage = 0.0;
};

struct SurrogateResult {
  double objective = 0.0;
  std::vector<double> grad;  // over policy logits
  double kl = 0.0;           // mean per-sample KL estimate
};

// Clipped surrogate with KL regularization for one group:
//   (1/N) sum_n min(w_n A_n, clip(w_n, 1-eps, 1+eps) A_n) - beta * KL
// where w_n is the current/behavior probability ratio. The KL estimate per
// sample is exp(d) - d - 1 with d = logp_ref - logp_cur, which is
// non-negative and zero only when the two agree. Samples sitting on the
// clipped branch contribute no policy gradient (subgradient 0 there); the
// KL term always does.
inline SurrogateResult surrogate(const AnchorGridPolicy& policy,
                                 std::span<const GroupSample> group, const GrpoConfig& cfg) {
  cfg.check();
  if (group.empty()) throw std::invalid_argument("surrogate: empty group");
  const double n = static_cast<double>(group.size());
  SurrogateResult res;
  res.grad.assign(policy.logits.size(), 0.0);
  for (const GroupSample& s : group) {
    if (s.anchor_indices.empty() || s.anchor_indices.size() != static_cast<std::size_t>(policy.k))
      throw std::invalid_argument("surrogate: sample selection length mismatch");
    const double logp_cur = plackett_luce_log_prob(policy.logits, s.anchor_indices);
    const double w = std::exp(logp_cur - s.logp_behavior);
    const double clipped = std::clamp(w, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    res.objective += std::min(w * s.advantage, clipped * s.advantage) / n;

    const double d = s.logp_reference - logp_cur;
    const double kl_s = std::exp(d) - d - 1.0;
    res.kl += kl_s / n;

    const bool unclipped_active =
        s.advantage >= 0.0 ? (w <= 1.0 + cfg.clip_eps) : (w >= 1.0 - cfg.clip_eps);
    const double policy_coef = unclipped_active ? s.advantage * w : 0.0;
    const double kl_coef = cfg.kl_beta * (1.0 - std::exp(d));
    if (policy_coef != 0.0 || kl_coef != 0.0) {
      const auto g = plackett_luce_grad(policy.logits, s.anchor_indices);
      for (std::size_t i = 0; i < g.size(); ++i)
        res.grad[i] += (policy_coef - kl_coef) * g[i] / n;
    }
  }
  res.objective -= cfg.kl_beta * res.kl;
  return res;
}

struct TrainReportRow {
  int iteration = 0;
  double mean_reward = 0.0;
  double max_reward = 0.0;
  double surrogate = 0.0;
  double kl = 0.0;
  double grad_norm = 0.0;
};

struct TrainReport {
  std::vector<TrainReportRow> rows;
  std::vector<double> final_logits;
};

// Scores one sampled episode; wired to the detection or segmentation
// environment by the caller.
using EpisodeRewardFn =
    std::function<double(const Scene& scene, const PolicyOutput& output, std::uint64_t seed)>;

namespace detail {

inline std::string dump_group(std::span<const GroupSample> group) {
  std::ostringstream os;
  for (std::size_t i = 0; i < group.size(); ++i) {
    os << "  sample " << i << ": reward=" << group[i].reward
       << " advantage=" << group[i].advantage << " logp_behavior=" << group[i].logp_behavior
       << " logp_reference=" << group[i].logp_reference << " indices=[";
    for (std::size_t j = 0; j < group[i].anchor_indices.size(); ++j)
      os << (j ? "," : "") << group[i].anchor_indices[j];
    os << "]\n";
  }
  return os.str();
}

}  // namespace detail

// Plain gradient-ascent GRPO over the anchor policy. Per iteration: draw a
// scene batch, sample N selections per scene, run episodes, normalize
// rewards within each group, take one (or several) surrogate steps against
// the whole batch. The reference snapshot is frozen at entry.
inline TrainReport train(std::span<const Scene> scenes, AnchorGridPolicy& policy,
                         const EpisodeRewardFn& episode_reward, const GrpoConfig& cfg,
                         std::uint64_t seed) {
  cfg.check();
  if (scenes.empty()) throw std::invalid_argument("train: no scenes");
  const ReferenceSnapshot reference{policy.logits};
  TrainReport report;

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<std::vector<GroupSample>> groups;
    double reward_sum = 0.0;
    double reward_max = -std::numeric_limits<double>::infinity();
    int episode_count = 0;

    for (int j = 0; j < cfg.scenes_per_iteration; ++j) {
      const Scene& scene =
          scenes[(static_cast<std::size_t>(iter) * cfg.scenes_per_iteration + j) % scenes.size()];
      std::vector<GroupSample> group;
      std::vector<double> rewards;
      for (int nidx = 0; nidx < cfg.group_size_n; ++nidx) {
        const std::uint64_t sample_seed = derive_seed(
            derive_seed(seed, "iter", static_cast<std::uint64_t>(iter)), scene.scene_id,
            static_cast<std::uint64_t>(j) * cfg.group_size_n + nidx);
        Rng rng(sample_seed);
        AnchorSample s = sample_k_detailed(policy, rng);
        GroupSample gs;
        gs.anchor_indices = std::move(s.indices);
        gs.logp_behavior = s.output.log_prob;
        gs.logp_reference = plackett_luce_log_prob(reference.logits, gs.anchor_indices);
        gs.reward = episode_reward(scene, s.output, derive_seed(sample_seed, "env", 0));
        rewards.push_back(gs.reward);
        reward_sum += gs.reward;
        reward_max = std::max(reward_max, gs.reward);
        ++episode_count;
        group.push_back(std::move(gs));
      }
      const auto adv = advantages(rewards, cfg.std_floor);
      for (std::size_t i = 0; i < group.size(); ++i) group[i].advantage = adv[i];
      groups.push_back(std::move(group));
    }

    TrainReportRow row;
    row.iteration = iter;
    row.mean_reward = reward_sum / episode_count;
    row.max_reward = reward_max;

    for (int update = 0; update < cfg.inner_updates; ++update) {
      std::vector<double> grad(policy.logits.size(), 0.0);
      double objective = 0.0, kl = 0.0;
      for (const auto& group : groups) {
        const SurrogateResult r = surrogate(policy, group, cfg);
        objective += r.objective;
        kl += r.kl;
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += r.grad[i];
      }
      const double g = static_cast<double>(groups.size());
      objective /= g;
      kl /= g;
      double norm2 = 0.0;
      for (double& v : grad) {
        v /= g;
        norm2 += v * v;
      }

      bool finite = std::isfinite(objective) && std::isfinite(kl) && std::isfinite(norm2);
      if (!finite) {
        std::string dump;
        for (const auto& group : groups) {
          const SurrogateResult r = surrogate(policy, group, cfg);
          bool bad = !std::isfinite(r.objective) || !std::isfinite(r.kl);
          for (double v : r.grad) bad = bad || !std::isfinite(v);
          if (bad) {
            dump = detail::dump_group(group);
            break;
          }
        }
        throw std::runtime_error("train: non-finite objective or gradient at iteration " +
                                 std::to_string(iter) + "\noffending group:\n" + dump);
      }

      if (update == 0) {
        row.surrogate = objective;
        row.kl = kl;
        row.grad_norm = std::sqrt(norm2);
      }
      for (std::size_t i = 0; i < policy.logits.size(); ++i)
        policy.logits[i] += cfg.learning_rate * grad[i];
    }

    report.rows.push_back(row);
  }
  report.final_logits = policy.logits;
  return report;
}

// Central finite differences of the batch surrogate objective against the
// analytic gradient; returns the max relative error over all logits with a
// small denominator floor. Callers should keep samples away from the clip
// boundary, where the objective is not differentiable.
inline double grad_check(const AnchorGridPolicy& policy,
                         std::span<const std::vector<GroupSample>> groups, const GrpoConfig& cfg,
                         double h = 1e-5) {
  const auto batch_objective = [&](const AnchorGridPolicy& p) {
    double obj = 0.0;
    for (const auto& group : groups) obj += surrogate(p, group, cfg).objective;
    return obj / static_cast<double>(groups.size());
  };
  std::vector<double> analytic(policy.logits.size(), 0.0);
  for (const auto& group : groups) {
    const SurrogateResult r = surrogate(policy, group, cfg);
    for (std::size_t i = 0; i < analytic.size(); ++i)
      analytic[i] += r.grad[i] / static_cast<double>(groups.size());
  }
  AnchorGridPolicy probe = policy;
  double worst = 0.0;
  for (std::size_t i = 0; i < policy.logits.size(); ++i) {
    probe.logits[i] = policy.logits[i] + h;
    const double plus = batch_objective(probe);
    probe.logits[i] = policy.logits[i] - h;
    const double minus = batch_objective(probe);
    probe.logits[i] = policy.logits[i];
    const double fd = (plus - minus) / (2.0 * h);
    const double rel = std::abs(analytic[i] - fd) / std::max(1e-3, std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace zoomrl
