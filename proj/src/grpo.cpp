#include "tforge/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tforge/error.hpp"

namespace tforge::grpo {

using response::Section;

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorKind::Config, "train." + field + ": " + why);
  };
  if (group_size < 2) fail("group_size", "must be >= 2");
  if (!(clip_eps > 0.0)) fail("clip_eps", "must be > 0");
  if (!(kl_beta >= 0.0)) fail("kl_beta", "must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    fail("learning_rate", "must be a positive finite number");
  }
  if (steps < 0) fail("steps", "must be >= 0");
  if (!order.complete()) fail("order", "must contain the answer section");
  if (!(brevity_train_prob >= 0.0 && brevity_train_prob <= 1.0)) {
    fail("brevity_train_prob", "must lie in [0, 1]");
  }
  if (epochs < 1) fail("epochs", "must be >= 1");
  if (!(adv_eps > 0.0)) fail("adv_eps", "must be > 0");
  if (n_tasks < 1) fail("n_tasks", "must be >= 1");
  if (eval_samples < 1) fail("eval_samples", "must be >= 1");
  if (threads < 0) fail("threads", "must be >= 0");
  if (shape.vocab < 2 || shape.max_concise < 1 || shape.max_detailed < 1 ||
      shape.coord_bins < 1 || shape.len_buckets < 1 || shape.image_size < 2) {
    fail("shape", "sizes must be positive (vocab >= 2)");
  }
  auto prob = [&](double p, const char* name) {
    if (!(p > 0.0 && p < 1.0)) fail(std::string("prior.") + name, "must lie in (0, 1)");
  };
  prob(prior.concise_stop, "concise_stop");
  prob(prior.detailed_stop, "detailed_stop");
}

Environment make_environment(const TrainConfig& cfg,
                             const embedding::EmbeddingProvider& embedder) {
  Environment env;
  env.tasks = make_toy_tasks(cfg.n_tasks, cfg.shape, cfg.seed);
  env.reward_cfg.ablation = cfg.ablation;
  env.embedder = &embedder;
  return env;
}

Eigen::VectorXd compute_advantages(const Eigen::Ref<const Eigen::VectorXd>& rewards, double eps) {
  const double mean = rewards.mean();
  const Eigen::ArrayXd centered = rewards.array() - mean;
  const double std = std::sqrt(centered.square().mean());
  if (!(std > eps)) return Eigen::VectorXd::Zero(rewards.size());
  return (centered / std).matrix();
}

GroupRollout rollout_group(const ToyPolicy& policy, const Environment& env, int task,
                           const TrainConfig& cfg, std::uint64_t seed, bool brevity, Mode mode) {
  const ToyTask& t = env.tasks.at(std::size_t(task));
  std::vector<Section> required_sections;
  for (Section s : cfg.order.sections()) {
    if (!(mode == Mode::Inference && s == Section::Detailed)) required_sections.push_back(s);
  }
  const response::SectionOrder required(required_sections);

  GroupRollout group;
  group.task = task;
  group.brevity = brevity;
  group.rewards.resize(cfg.group_size);
  for (int i = 0; i < cfg.group_size; ++i) {
    std::mt19937_64 rng(derive_seed(seed, std::uint64_t(i)));
    Sample s;
    s.trajectory = policy.sample(t, cfg.order, mode, brevity, rng);
    s.parsed = response::parse(s.trajectory.text);
    s.reward = reward::total_reward(s.parsed, t.gt, required, env.reward_cfg, *env.embedder);
    group.rewards[i] = s.reward.r_train;
    group.samples.push_back(std::move(s));
  }
  group.advantages = compute_advantages(group.rewards, cfg.adv_eps);
  return group;
}

SurrogateResult surrogate(const Eigen::VectorXd& theta, std::span<const GroupRollout> batch,
                          const TrainConfig& cfg) {
  SurrogateResult out;
  out.gradient = Eigen::VectorXd::Zero(theta.size());
  std::size_t n_samples = 0;
  for (const auto& g : batch) n_samples += g.samples.size();
  if (n_samples == 0) return out;

  const double lo = 1.0 - cfg.clip_eps;
  const double hi = 1.0 + cfg.clip_eps;
  std::size_t n_decisions = 0;
  std::size_t n_clipped = 0;
  double kl_total = 0.0;
  for (const auto& g : batch) {
    for (std::size_t i = 0; i < g.samples.size(); ++i) {
      const auto& decisions = g.samples[i].trajectory.decisions;
      if (decisions.empty()) continue;
      const double adv = g.advantages[Eigen::Index(i)];
      const double w = (cfg.logprob_norm == LogProbNorm::TokenMean ? 1.0 / double(decisions.size())
                                                                   : 1.0) /
                       double(n_samples);
      for (const Decision& d : decisions) {
        const double logp = ToyPolicy::log_prob(theta, d);
        const double ratio = std::exp(logp - d.logp);
        const double unclipped = ratio * adv;
        const double clipped = std::clamp(ratio, lo, hi) * adv;
        const bool active = unclipped <= clipped;
        const double back = std::exp(d.logp - logp);
        const double kl = back - (d.logp - logp) - 1.0;
        out.objective += w * (std::min(unclipped, clipped) - cfg.kl_beta * kl);
        kl_total += kl;
        ++n_decisions;
        if (!active) ++n_clipped;

        // d objective / d logp_new for this decision
        const double coef = w * ((active ? adv * ratio : 0.0) - cfg.kl_beta * (1.0 - back));
        if (coef == 0.0) continue;
        const Eigen::VectorXd p = ToyPolicy::probs(theta, d);
        for (int k = 0; k < d.n_groups; ++k) {
          const int base = d.bases[std::size_t(k)];
          out.gradient.segment(base, d.n_actions) -= coef * p;
          out.gradient[base + d.action] += coef;
        }
      }
    }
  }
  if (n_decisions > 0) {
    out.clip_fraction = double(n_clipped) / double(n_decisions);
    out.mean_kl = kl_total / double(n_decisions);
  }
  return out;
}

StepStats batch_stats(std::span<const GroupRollout> batch, double gate_threshold) {
  StepStats s;
  std::size_t n = 0;
  for (const auto& g : batch) {
    for (const auto& sample : g.samples) {
      s.mean_r_task += sample.reward.r_task;
      s.mean_r_train += sample.reward.r_train;
      s.mean_len_c += double(sample.trajectory.concise.size());
      s.mean_len_d += double(sample.trajectory.detailed.size());
      s.success_rate += sample.reward.iou_value > gate_threshold ? 1.0 : 0.0;
      ++n;
    }
  }
  if (n > 0) {
    const double inv = 1.0 / double(n);
    s.mean_r_task *= inv;
    s.mean_r_train *= inv;
    s.mean_len_c *= inv;
    s.mean_len_d *= inv;
    s.success_rate *= inv;
  }
  return s;
}

namespace {

[[noreturn]] void dump_non_finite(const Eigen::VectorXd& theta,
                                  std::span<const GroupRollout> batch, const TrainConfig& cfg) {
  std::ostringstream msg;
  msg << "non-finite surrogate gradient";
  for (std::size_t g = 0; g < batch.size(); ++g) {
    const SurrogateResult single = surrogate(theta, batch.subspan(g, 1), cfg);
    if (single.gradient.allFinite()) continue;
    msg << "\noffending group " << g << " (task " << batch[g].task << ")";
    for (std::size_t i = 0; i < batch[g].samples.size(); ++i) {
      msg << "\n  [" << i << "] r_train=" << batch[g].samples[i].reward.r_train
          << " adv=" << batch[g].advantages[Eigen::Index(i)] << " text="
          << batch[g].samples[i].trajectory.text;
    }
    break;
  }
  throw Error(ErrorKind::NonFinite, msg.str());
}

}  // namespace

StepStats grpo_step(ToyPolicy& policy, std::span<const GroupRollout> batch,
                    const TrainConfig& cfg, OptimizerState& opt) {
  Eigen::VectorXd& theta = policy.params();
  if (opt.m.size() != theta.size()) {
    opt.m = Eigen::VectorXd::Zero(theta.size());
    opt.v = Eigen::VectorXd::Zero(theta.size());
    opt.t = 0;
  }
  double clip_fraction = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const SurrogateResult sr = surrogate(theta, batch, cfg);
    if (!sr.gradient.allFinite() || !std::isfinite(sr.objective)) {
      dump_non_finite(theta, batch, cfg);
    }
    clip_fraction += sr.clip_fraction;
    if (cfg.optimizer == OptimizerKind::Sgd) {
      theta += cfg.learning_rate * sr.gradient;
    } else {
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      ++opt.t;
      opt.m = b1 * opt.m + (1.0 - b1) * sr.gradient;
      opt.v = b2 * opt.v + (1.0 - b2) * sr.gradient.cwiseAbs2();
      const double c1 = 1.0 - std::pow(b1, double(opt.t));
      const double c2 = 1.0 - std::pow(b2, double(opt.t));
      theta.array() +=
          cfg.learning_rate * (opt.m.array() / c1) / ((opt.v.array() / c2).sqrt() + eps);
    }
    if (!theta.allFinite()) dump_non_finite(theta, batch, cfg);
  }
  StepStats stats = batch_stats(batch, reward::RewardConfig{}.gate_threshold);
  stats.clip_fraction = clip_fraction / double(cfg.epochs);
  return stats;
}

}  // namespace tforge::grpo
