#ifndef TFORGE_GRPO_HPP
#define TFORGE_GRPO_HPP

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tforge/embedding.hpp"
#include "tforge/response.hpp"
#include "tforge/reward.hpp"
#include "tforge/toy_policy.hpp"

namespace tforge::grpo {

enum class LogProbNorm {
  /// each response's surrogate is averaged over its decisions
  TokenMean,
  /// each response's surrogate is summed over its decisions
  SequenceSum,
};

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  int group_size = 8;
  double clip_eps = 0.2;
  double kl_beta = 0.0;
  double learning_rate = 0.05;
  int steps = 300;
  std::uint64_t seed = 0;
  response::SectionOrder order = response::SectionOrder::training();
  reward::Ablation ablation;
  /// Probability that a training group sees the brevity flag.
  double brevity_train_prob = 0.0;
  /// Optimizer passes over each sampled batch.
  int epochs = 1;
  LogProbNorm logprob_norm = LogProbNorm::TokenMean;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adv_eps = 1e-8;
  int n_tasks = 4;
  /// Responses per task in the final evaluation.
  int eval_samples = 64;
  /// 0 = hardware concurrency.
  int threads = 1;
  PolicyShape shape;
  PolicyPrior prior;

  /// Throws Config with a field-level message.
  void validate() const;
};

/// One sampled response with its reward.
struct Sample {
  Trajectory trajectory;
  response::StructuredResponse parsed;
  reward::RewardBreakdown reward;
};

/// G responses to one task, with group-normalized advantages.
struct GroupRollout {
  int task = 0;
  bool brevity = false;
  std::vector<Sample> samples;
  Eigen::VectorXd rewards;
  Eigen::VectorXd advantages;
};

/// Shared, read-only pieces needed to score rollouts.
struct Environment {
  std::vector<ToyTask> tasks;
  reward::RewardConfig reward_cfg;
  const embedding::EmbeddingProvider* embedder = nullptr;
};

Environment make_environment(const TrainConfig& cfg, const embedding::EmbeddingProvider& embedder);

/// (r_i - mean) / max(population std, eps).
Eigen::VectorXd compute_advantages(const Eigen::Ref<const Eigen::VectorXd>& rewards,
                                   double eps = 1e-8);

/// Samples G responses for `task` in `cfg.order`, renders, parses and scores each one.
/// Sample i draws from its own stream seeded by (seed, i), so results do not depend on
/// scheduling.
GroupRollout rollout_group(const ToyPolicy& policy, const Environment& env, int task,
                           const TrainConfig& cfg, std::uint64_t seed, bool brevity = false,
                           Mode mode = Mode::Train);

struct SurrogateResult {
  double objective = 0.0;
  Eigen::VectorXd gradient;
  /// Fraction of decisions whose clipped branch was selected.
  double clip_fraction = 0.0;
  double mean_kl = 0.0;
};

/// Clipped surrogate
///   J = mean_i w_i sum_t [min(rho_t A_i, clip(rho_t, 1 - eps, 1 + eps) A_i) - beta KL_t]
/// with rho_t = exp(logp_new - logp_old), KL_t the k3 estimator of KL(new || old) and
/// w_i = 1 / |o_i| or 1 per `cfg.logprob_norm`. Gradient is analytic.
SurrogateResult surrogate(const Eigen::VectorXd& theta, std::span<const GroupRollout> batch,
                          const TrainConfig& cfg);

struct OptimizerState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;
};

struct StepStats {
  int step = 0;
  double mean_r_task = 0.0;
  double mean_r_train = 0.0;
  double mean_len_c = 0.0;
  double mean_len_d = 0.0;
  double success_rate = 0.0;
  double clip_fraction = 0.0;
};

/// Summary statistics of a batch (everything except clip_fraction).
StepStats batch_stats(std::span<const GroupRollout> batch, double gate_threshold);

/// Gradient ascent on the surrogate, `cfg.epochs` passes. Throws NonFinite with a dump
/// of the offending group when a gradient entry is not finite.
StepStats grpo_step(ToyPolicy& policy, std::span<const GroupRollout> batch,
                    const TrainConfig& cfg, OptimizerState& opt);

}  // namespace tforge::grpo

#endif  // TFORGE_GRPO_HPP
