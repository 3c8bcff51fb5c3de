#ifndef TFORGE_EVAL_HPP
#define TFORGE_EVAL_HPP

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tforge/embedding.hpp"
#include "tforge/geometry.hpp"
#include "tforge/response.hpp"
#include "tforge/reward.hpp"

namespace tforge::eval {

struct ImageSize {
  int width = 0;
  int height = 0;
};

/// One prediction with its ground truth.
///
/// JSONL fields: id, split, image {width, height}, instruction, brevity_suffix?,
/// generation, gt_box? [x1, y1, x2, y2], gt_mask? (RLE text), gt_points? [[x, y], ...],
/// pred_mask? (RLE text), mode? ("train" | "inference").
struct EvalRecord {
  std::string id;
  std::string split;
  ImageSize image;
  std::string instruction;
  std::optional<std::string> brevity_suffix;
  std::string generation;
  std::optional<geometry::Boxd> gt_box;
  std::optional<geometry::Mask> gt_mask;
  std::vector<geometry::Pointd> gt_points;
  /// Mask from a real segmenter; replaces the rasterized predicted box when present.
  std::optional<geometry::Mask> pred_mask;
  /// Inference records are not expected to carry a detailed rationale. When absent the
  /// mode is inferred from whether the generation contains a detailed-rationale tag.
  std::optional<bool> inference;

  /// Ground-truth answer used by the reward: gt_box, or the mask's bounding box.
  geometry::Answer gt_answer() const;
  /// Ground-truth mask: gt_mask, or gt_box rasterized on the image.
  geometry::Mask gt_region() const;
};

/// Throws MalformedPayload on schema violations.
EvalRecord record_from_json(const nlohmann::json& j);

struct IngestResult {
  std::vector<EvalRecord> records;
  std::size_t skipped = 0;
  /// "line N: reason" for every skipped line.
  std::vector<std::string> diagnostics;
};

/// Extra fields keyed by record id, merged over each record before validation. Lets
/// ground truth live in a separate file.
using Overlay = std::map<std::string, nlohmann::json>;

/// Reads an overlay JSONL file: one object with an "id" per line. Throws Io or
/// MalformedPayload.
Overlay load_overlay(const std::filesystem::path& path);

/// Blank lines are ignored; invalid lines are skipped and counted.
IngestResult ingest(std::istream& in, const Overlay* overlay = nullptr);
/// Throws Io when the file cannot be read.
IngestResult ingest(const std::filesystem::path& path, const Overlay* overlay = nullptr);

struct RecordScore {
  std::string id;
  std::string split;
  double iou = 0.0;
  std::uint64_t intersection = 0;
  std::uint64_t union_count = 0;
  /// Rationale tokens only: concise plus detailed.
  std::size_t tokens = 0;
  response::SectionOrder order;
  reward::RewardBreakdown breakdown;
};

/// Scores one record. `order` is the expected section layout; the detailed section is
/// dropped from the required set for inference records.
RecordScore score_record(const EvalRecord& rec, const reward::RewardConfig& cfg,
                         const response::SectionOrder& order,
                         const embedding::EmbeddingProvider& provider);

/// [0, 10), [10, 20), ... [290, 300), [300, inf).
const std::vector<double>& histogram_edges();

struct OrderMetrics {
  std::size_t n = 0;
  double giou = 0.0;
  double ciou = 0.0;
  double mean_tokens = 0.0;
};

struct SplitMetrics {
  std::string split;
  std::size_t n = 0;
  double giou = 0.0;
  double ciou = 0.0;
  double mean_tokens = 0.0;
  double median_tokens = 0.0;
  /// One count per histogram bin.
  std::vector<std::size_t> histogram;
  /// Keyed by order code ("" when no section parsed).
  std::map<std::string, OrderMetrics> by_order;
  std::vector<std::string> diagnostics;

  bool degenerate() const { return !diagnostics.empty(); }
};

/// Throws EmptySplit when `scores` is empty. Zero total union gives cIoU 1 plus a
/// degenerate-split diagnostic.
SplitMetrics aggregate(std::span<const RecordScore> scores, const std::string& split);

/// One SplitMetrics per split name, sorted by name.
std::vector<SplitMetrics> aggregate_splits(std::span<const RecordScore> scores);

struct ComparisonRow {
  std::string split;
  double baseline_tokens = 0.0;
  double candidate_tokens = 0.0;
  /// baseline.mean_tokens / candidate.mean_tokens
  double token_reduction_factor = 0.0;
  /// Candidate minus baseline, in percentage points.
  double delta_ciou = 0.0;
  double delta_giou = 0.0;
};

/// Throws InvalidInput for different splits and UndefinedFactor when the candidate has
/// zero mean tokens.
ComparisonRow compare(const SplitMetrics& baseline, const SplitMetrics& candidate);

/// Compact sub-row such as "4.9×↓, +3.9" (factor to one decimal, cIoU delta in points).
std::string format_subrow(const ComparisonRow& row);

nlohmann::ordered_json to_json(const SplitMetrics& m);
SplitMetrics split_metrics_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const RecordScore& s);

/// Writes split_<name>.csv, hist_<name>.csv, summary.csv, orders.csv, comparison.csv,
/// metrics.json and metadata.json into `dir`. Throws Io when a file cannot be written.
void emit_report(const std::filesystem::path& dir, std::span<const RecordScore> scores,
                 std::span<const SplitMetrics> metrics, std::span<const ComparisonRow> comparisons,
                 const nlohmann::ordered_json& metadata);

void write_comparison_csv(const std::filesystem::path& file,
                          std::span<const ComparisonRow> comparisons);

}  // namespace tforge::eval

#endif  // TFORGE_EVAL_HPP
