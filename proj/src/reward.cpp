#include "tforge/reward.hpp"

#include <algorithm>
#include <cmath>

namespace tforge::reward {

using response::Section;

void RewardConfig::validate() const {
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(ErrorKind::Config, std::string(name) + " must lie in [0, 1]");
    }
  };
  unit(iou_binary_threshold, "iou_binary_threshold");
  unit(gate_threshold, "gate_threshold");
  if (!(l1_binary_threshold >= 0.0) || !std::isfinite(l1_binary_threshold)) {
    throw Error(ErrorKind::Config, "l1_binary_threshold must be a finite non-negative number");
  }
}

int format_reward(const response::StructuredResponse& resp,
                  const response::SectionOrder& required, const RewardConfig& cfg) {
  for (Section s : required.sections()) {
    if (!resp.order.contains(s)) return 0;
  }
  if (!resp.answer) return 0;
  if (cfg.stray_text_voids_format && resp.has(response::DiagnosticCode::StrayText)) return 0;
  return 1;
}

AccuracyReward accuracy_reward(const geometry::Answer& pred, const geometry::Answer& gt,
                               const RewardConfig& cfg) {
  AccuracyReward out;
  out.iou_value = geometry::box_iou(pred.box, gt.box);
  out.l1_value = geometry::prompt_l1(pred, gt, cfg.l1);
  out.iou_binary = out.iou_value >= cfg.iou_binary_threshold ? 1 : 0;
  out.l1_binary = out.l1_value <= cfg.l1_binary_threshold ? 1 : 0;
  return out;
}

double conciseness_score(std::size_t len_c, std::size_t len_d) {
  if (len_d == 0) {
    throw Error(ErrorKind::UndefinedDenominator, "conciseness_score: detailed length is 0");
  }
  return std::max(0.0, 1.0 - double(len_c) / double(len_d));
}

double similarity_score(std::string_view concise, std::string_view detailed,
                        const embedding::EmbeddingProvider& provider,
                        std::vector<std::string>* notes) {
  if (text::trim(concise).empty() || text::trim(detailed).empty()) {
    throw Error(ErrorKind::DegenerateEmbedding, "similarity_score: blank text");
  }
  const std::vector<std::string> texts{std::string(concise), std::string(detailed)};
  const auto batch = provider.embed_batch(texts);
  if (notes) notes->insert(notes->end(), batch.notes.begin(), batch.notes.end());
  const Eigen::VectorXd& a = batch.vectors.at(0);
  const Eigen::VectorXd& b = batch.vectors.at(1);
  if (a.size() != b.size()) {
    throw Error(ErrorKind::DegenerateEmbedding, "similarity_score: dimension mismatch");
  }
  const double aa = a.squaredNorm();
  const double bb = b.squaredNorm();
  if (!(aa > 0.0) || !(bb > 0.0) || !std::isfinite(aa) || !std::isfinite(bb)) {
    throw Error(ErrorKind::DegenerateEmbedding, "similarity_score: zero-norm embedding");
  }
  // sqrt(aa * bb) rather than |a||b| keeps cos(t, t) == 1 exactly
  return std::clamp(a.dot(b) / std::sqrt(aa * bb), -1.0, 1.0);
}

RewardBreakdown total_reward(const response::StructuredResponse& resp, const geometry::Answer& gt,
                             const response::SectionOrder& required, const RewardConfig& cfg,
                             const embedding::EmbeddingProvider& provider,
                             const text::Tokenizer& tokenizer) {
  RewardBreakdown out;
  auto note = [&out](std::string_view what, const std::exception& e) {
    out.diagnostics.push_back(std::string(what) + ": " + e.what());
  };

  out.format = format_reward(resp, required, cfg);
  if (resp.answer) {
    try {
      const AccuracyReward acc = accuracy_reward(*resp.answer, gt, cfg);
      out.iou_value = acc.iou_value;
      out.iou_binary = acc.iou_binary;
      out.l1_value = acc.l1_value;
      out.l1_binary = acc.l1_binary;
    } catch (const Error& e) {
      note("accuracy", e);
      out.iou_value = out.l1_value = 0.0;
      out.iou_binary = out.l1_binary = 0;
    }
  } else {
    out.diagnostics.emplace_back("accuracy: no decodable answer");
  }
  out.r_task = double(out.format + out.iou_binary + out.l1_binary);

  if (resp.concise) out.len_concise = tokenizer.count(*resp.concise);
  if (resp.detailed) out.len_detailed = tokenizer.count(*resp.detailed);

  const bool rationales = resp.concise.has_value() && resp.detailed.has_value();
  if (rationales && cfg.ablation.distill) {
    double sim = 1.0;
    double concise = 1.0;
    bool ok = true;
    if (cfg.ablation.sim) {
      try {
        sim = similarity_score(*resp.concise, *resp.detailed, provider, &out.diagnostics);
      } catch (const Error& e) {
        note("similarity", e);
        ok = false;
      }
    }
    if (cfg.ablation.concise) {
      try {
        concise = conciseness_score(out.len_concise, out.len_detailed);
      } catch (const Error& e) {
        note("conciseness", e);
        ok = false;
      }
    }
    if (ok) {
      out.s_sim = sim;
      out.s_concise = concise;
      out.r_distill = out.s_sim * out.s_concise;
    }
  }
  if (rationales) {
    out.gate = cfg.ablation.gate ? out.iou_value > cfg.gate_threshold : true;
  }
  out.r_train = out.gate ? out.r_task + out.r_distill : out.r_task;
  return out;
}

}  // namespace tforge::reward
