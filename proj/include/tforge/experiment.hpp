#ifndef TFORGE_EXPERIMENT_HPP
#define TFORGE_EXPERIMENT_HPP

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tforge/grpo.hpp"

namespace tforge::grpo {

/// Final-policy evaluation under one (mode, brevity flag) setting.
struct EvalSummary {
  std::string label;
  double mean_len_c = 0.0;
  double mean_len_d = 0.0;
  double success_rate = 0.0;
  double mean_r_task = 0.0;
};

struct RunReport {
  std::vector<StepStats> curve;
  /// train, infer, infer+brevity
  std::vector<EvalSummary> final_eval;
  std::size_t groups_seen = 0;

  const EvalSummary& eval(const std::string& label) const;
};

/// Called for every sampled training group before the optimizer step.
using GroupObserver = std::function<void(int step, const GroupRollout&)>;

/// Runs `cfg.steps` GRPO steps on the toy environment. One group per task per step.
/// Writes one JSON line per step to `run_log` when given. Deterministic for a fixed config.
RunReport run_experiment(const TrainConfig& cfg, const embedding::EmbeddingProvider& embedder,
                         std::ostream* run_log = nullptr, const GroupObserver& observer = {});

/// Evaluates `policy` with `samples_per_task` responses per task.
EvalSummary evaluate_policy(const ToyPolicy& policy, const Environment& env,
                            const TrainConfig& cfg, Mode mode, bool brevity,
                            std::uint64_t seed, const std::string& label);

nlohmann::ordered_json to_json(const StepStats& s);
nlohmann::ordered_json to_json(const RunReport& r);

}  // namespace tforge::grpo

#endif  // TFORGE_EXPERIMENT_HPP
