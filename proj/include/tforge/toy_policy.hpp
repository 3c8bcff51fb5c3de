#ifndef TFORGE_TOY_POLICY_HPP
#define TFORGE_TOY_POLICY_HPP

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tforge/geometry.hpp"
#include "tforge/response.hpp"

namespace tforge::grpo {

/// Sizes of the tabular policy.
struct PolicyShape {
  int vocab = 12;
  int max_concise = 16;
  int max_detailed = 24;
  int coord_bins = 4;
  /// Buckets for the length of an already generated rationale; bucket 0 means "none".
  int len_buckets = 4;
  int image_size = 64;
};

/// Initial logits standing in for a pretrained model's habits.
struct PolicyPrior {
  /// Per-step stop probability of each rationale before training.
  double concise_stop = 0.10;
  double detailed_stop = 0.06;
  /// Bias of the concise / detailed token heads towards the task's relevant tokens.
  double concise_relevance = 0.5;
  double detailed_relevance = 1.5;
  /// Bias towards repeating the dominant token of the preceding rationale.
  double copy = 1.0;
  /// Bias of the answer head towards the true bin, without and with relevant evidence
  /// in the preceding rationale.
  double answer_base = 0.3;
  double answer_evidence = 1.5;
  /// Extra stop logit on the concise rationale when the brevity flag is set.
  double brevity = 0.5;
};

/// Synthetic grounding task: a target box on a square grid and the rationale tokens that
/// matter for it.
struct ToyTask {
  int id = 0;
  /// Instruction features; currently the task id.
  std::vector<int> instruction;
  std::array<int, 4> gt_bins{};
  geometry::Answer gt;
  std::vector<int> relevant_tokens;
  int width = 64;
  int height = 64;
};

/// Deterministic task set: `count` tasks with distinct relevant-token pairs.
std::vector<ToyTask> make_toy_tasks(int count, const PolicyShape& shape, std::uint64_t seed);

/// Word for token id; vocabulary beyond the built-in list is named "w<k>".
std::string token_word(int token);

/// One sampled categorical choice. The logits are the sum of `n_groups` parameter slices
/// of length `n_actions` starting at `bases`.
struct Decision {
  std::array<int, 3> bases{};
  int n_groups = 1;
  int n_actions = 0;
  int action = 0;
  double logp = 0.0;
};

enum class Mode { Train, Inference };

/// Everything sampled for one response.
struct Trajectory {
  std::vector<Decision> decisions;
  std::vector<int> concise;
  std::vector<int> detailed;
  std::array<int, 4> answer_bins{};
  bool brevity = false;
  std::string text;
};

/// Forced section contents, used to probe conditional distributions.
struct ForcedSections {
  std::optional<std::vector<int>> concise;
  std::optional<std::vector<int>> detailed;
};

/// Tabular softmax policy over (context feature, action) pairs.
///
/// Heads: rationale tokens indexed by (section, task, dominant token of the preceding
/// rationale); stop/continue as the sum of a (section, preceding-length bucket, position)
/// table, a (section, prompt mode, position) table and, when the flag is set, a brevity
/// offset; answer coordinate bins indexed by (task, evidence bit, coordinate).
/// The prompt-mode table is the only stop parameter that differs between training prompts
/// and inference prompts, so behaviour learned there does not carry over to inference.
/// A rationale only sees the other rationale when that one precedes it in the order; the
/// answer's evidence bit only looks at rationales that precede it.
class ToyPolicy {
 public:
  ToyPolicy(PolicyShape shape, int n_tasks);

  static ToyPolicy pretrained(const PolicyShape& shape, const std::vector<ToyTask>& tasks,
                              const PolicyPrior& prior);

  const PolicyShape& shape() const noexcept { return shape_; }
  int n_tasks() const noexcept { return n_tasks_; }
  Eigen::VectorXd& params() noexcept { return theta_; }
  const Eigen::VectorXd& params() const noexcept { return theta_; }
  Eigen::Index size() const noexcept { return theta_.size(); }

  Trajectory sample(const ToyTask& task, const response::SectionOrder& order, Mode mode,
                    bool brevity, std::mt19937_64& rng, const ForcedSections& forced = {}) const;

  /// Log-probability of `d.action` under `theta`.
  static double log_prob(const Eigen::VectorXd& theta, const Decision& d);
  /// Softmax over the decision's summed logits.
  static Eigen::VectorXd probs(const Eigen::VectorXd& theta, const Decision& d);

  // parameter index helpers, exposed for tests
  int token_base(response::Section s, int task, int ctx_token) const;
  int stop_base(response::Section s, int len_bucket, int position) const;
  int stop_mode_base(response::Section s, Mode mode, int position) const;
  /// Stop-head offset added only while the brevity flag is set.
  int brevity_base(response::Section s) const;
  int answer_base(int task, int evidence, int coord) const;
  int length_bucket(std::size_t length) const;

  /// Coordinate value of `bin` for coordinate `coord` (0..3 = x1, y1, x2, y2).
  double bin_coordinate(int coord, int bin) const;

 private:
  Decision decide(std::array<int, 3> bases, int n_groups, int n_actions,
                  std::mt19937_64& rng) const;
  Decision forced(std::array<int, 3> bases, int n_groups, int n_actions, int action) const;

  PolicyShape shape_;
  int n_tasks_;
  int token_offset_ = 0;
  int stop_offset_ = 0;
  int stop_mode_offset_ = 0;
  int brevity_offset_ = 0;
  int answer_offset_ = 0;
  Eigen::VectorXd theta_;
};

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double uniform01(std::mt19937_64& rng);

/// Stable seed for a (master, a, b, c) tuple.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

}  // namespace tforge::grpo

#endif  // TFORGE_TOY_POLICY_HPP
