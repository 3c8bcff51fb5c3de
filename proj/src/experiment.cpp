#include "tforge/experiment.hpp"

#include <algorithm>
#include <thread>

#include "tforge/error.hpp"

namespace tforge::grpo {

namespace {

int worker_count(const TrainConfig& cfg, std::size_t jobs) {
  int n = cfg.threads;
  if (n == 0) n = int(std::max(1U, std::thread::hardware_concurrency()));
  return std::max(1, std::min(n, int(jobs)));
}

/// Runs job(i) for i in [0, n); results land in caller-owned slots so scheduling never
/// affects output.
template <typename Job>
void parallel_for(std::size_t n, int workers, Job&& job) {
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = std::size_t(w); i < n; i += std::size_t(workers)) {
          try {
            job(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kBrevityStream = 2;
constexpr std::uint64_t kEvalStream = 3;

}  // namespace

const EvalSummary& RunReport::eval(const std::string& label) const {
  for (const auto& e : final_eval) {
    if (e.label == label) return e;
  }
  throw Error(ErrorKind::InvalidInput, "no evaluation labelled '" + label + "'");
}

EvalSummary evaluate_policy(const ToyPolicy& policy, const Environment& env,
                            const TrainConfig& cfg, Mode mode, bool brevity,
                            std::uint64_t seed, const std::string& label) {
  TrainConfig eval_cfg = cfg;
  eval_cfg.group_size = std::max(2, cfg.eval_samples);
  std::vector<GroupRollout> groups(env.tasks.size());
  parallel_for(groups.size(), worker_count(cfg, groups.size()), [&](std::size_t t) {
    groups[t] = rollout_group(policy, env, int(t), eval_cfg, derive_seed(seed, t), brevity, mode);
  });
  const StepStats s = batch_stats(groups, env.reward_cfg.gate_threshold);
  return EvalSummary{label, s.mean_len_c, s.mean_len_d, s.success_rate, s.mean_r_task};
}

RunReport run_experiment(const TrainConfig& cfg, const embedding::EmbeddingProvider& embedder,
                         std::ostream* run_log, const GroupObserver& observer) {
  cfg.validate();
  const Environment env = make_environment(cfg, embedder);
  ToyPolicy policy = ToyPolicy::pretrained(cfg.shape, env.tasks, cfg.prior);
  OptimizerState opt;
  RunReport report;
  const std::size_t n_groups = env.tasks.size();

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<GroupRollout> batch(n_groups);
    parallel_for(n_groups, worker_count(cfg, n_groups), [&](std::size_t g) {
      std::mt19937_64 flag_rng(derive_seed(cfg.seed, kBrevityStream, std::uint64_t(step), g));
      const bool brevity = uniform01(flag_rng) < cfg.brevity_train_prob;
      batch[g] = rollout_group(policy, env, int(g), cfg,
                               derive_seed(cfg.seed, kTrainStream, std::uint64_t(step), g),
                               brevity, Mode::Train);
    });
    if (observer) {
      for (const auto& g : batch) observer(step, g);
    }
    report.groups_seen += batch.size();
    StepStats stats = grpo_step(policy, batch, cfg, opt);
    stats.step = step;
    report.curve.push_back(stats);
    if (run_log) *run_log << to_json(stats).dump() << '\n';
  }

  const std::uint64_t eval_seed = derive_seed(cfg.seed, kEvalStream);
  report.final_eval.push_back(
      evaluate_policy(policy, env, cfg, Mode::Train, false, derive_seed(eval_seed, 0), "train"));
  report.final_eval.push_back(
      evaluate_policy(policy, env, cfg, Mode::Inference, false, derive_seed(eval_seed, 1), "infer"));
  report.final_eval.push_back(evaluate_policy(policy, env, cfg, Mode::Inference, true,
                                              derive_seed(eval_seed, 2), "infer_brevity"));
  return report;
}

nlohmann::ordered_json to_json(const StepStats& s) {
  nlohmann::ordered_json j;
  j["step"] = s.step;
  j["mean_r_task"] = s.mean_r_task;
  j["mean_r_train"] = s.mean_r_train;
  j["mean_len_c"] = s.mean_len_c;
  j["mean_len_d"] = s.mean_len_d;
  j["success_rate"] = s.success_rate;
  j["clip_fraction"] = s.clip_fraction;
  return j;
}

nlohmann::ordered_json to_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["steps"] = r.curve.size();
  j["groups_seen"] = r.groups_seen;
  if (!r.curve.empty()) j["last_step"] = to_json(r.curve.back());
  auto& evals = j["final_eval"] = nlohmann::ordered_json::array();
  for (const auto& e : r.final_eval) {
    nlohmann::ordered_json ej;
    ej["label"] = e.label;
    ej["mean_len_c"] = e.mean_len_c;
    ej["mean_len_d"] = e.mean_len_d;
    ej["success_rate"] = e.success_rate;
    ej["mean_r_task"] = e.mean_r_task;
    evals.push_back(std::move(ej));
  }
  return j;
}

}  // namespace tforge::grpo
