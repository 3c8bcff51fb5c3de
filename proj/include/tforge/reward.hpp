#ifndef TFORGE_REWARD_HPP
#define TFORGE_REWARD_HPP

#include <string>
#include <string_view>
#include <vector>

#include "tforge/embedding.hpp"
#include "tforge/geometry.hpp"
#include "tforge/response.hpp"
#include "tforge/text.hpp"

namespace tforge::reward {

/// Switches for the distillation term. Turning a factor off forces it to 1; turning the
/// gate off adds the distillation reward regardless of IoU.
struct Ablation {
  bool distill = true;
  bool gate = true;
  bool sim = true;
  bool concise = true;
};

struct RewardConfig {
  double iou_binary_threshold = 0.5;
  double l1_binary_threshold = 10.0;
  /// Distillation is added only when IoU is strictly above this.
  double gate_threshold = 0.5;
  bool stray_text_voids_format = false;
  text::TokenizerId tokenizer_id = text::TokenizerId::WhitespacePunct;
  embedding::EmbedderId embedder_id = embedding::EmbedderId::HashedBow;
  geometry::L1Options l1;
  Ablation ablation;

  /// Throws Config when a threshold is out of range.
  void validate() const;
};

struct AccuracyReward {
  double iou_value = 0.0;
  int iou_binary = 0;
  double l1_value = 0.0;
  int l1_binary = 0;
};

struct RewardBreakdown {
  int format = 0;
  double iou_value = 0.0;
  int iou_binary = 0;
  double l1_value = 0.0;
  int l1_binary = 0;
  double s_sim = 0.0;
  double s_concise = 0.0;
  double r_distill = 0.0;
  bool gate = false;
  double r_task = 0.0;
  double r_train = 0.0;
  std::size_t len_concise = 0;
  std::size_t len_detailed = 0;
  std::vector<std::string> diagnostics;
};

int format_reward(const response::StructuredResponse& resp,
                  const response::SectionOrder& required, const RewardConfig& cfg);

AccuracyReward accuracy_reward(const geometry::Answer& pred, const geometry::Answer& gt,
                               const RewardConfig& cfg);

/// max(0, 1 - len_c / len_d). Throws UndefinedDenominator when len_d == 0.
double conciseness_score(std::size_t len_c, std::size_t len_d);

/// Cosine of the provider embeddings. Throws DegenerateEmbedding for blank text or a
/// zero-norm embedding. Provider notes (fallbacks) are appended to `notes` when given.
double similarity_score(std::string_view concise, std::string_view detailed,
                        const embedding::EmbeddingProvider& provider,
                        std::vector<std::string>* notes = nullptr);

/// Full hierarchical reward for one response. Never throws: failing components
/// contribute zero and leave a diagnostic.
RewardBreakdown total_reward(const response::StructuredResponse& resp, const geometry::Answer& gt,
                             const response::SectionOrder& required, const RewardConfig& cfg,
                             const embedding::EmbeddingProvider& provider,
                             const text::Tokenizer& tokenizer = text::default_tokenizer());

}  // namespace tforge::reward

#endif  // TFORGE_REWARD_HPP
