#ifndef TFORGE_RESPONSE_HPP
#define TFORGE_RESPONSE_HPP

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tforge/geometry.hpp"

namespace tforge::response {

enum class Section { Concise, Answer, Detailed };

/// Tag name without brackets: think, answer, d_think.
std::string_view tag_name(Section s);

/// Ordered set of section kinds, each at most once. A *complete* order contains Answer.
///
/// Short codes use one letter per section: `c` concise, `A` answer, `d` detailed,
/// so the training layout is "cAd" and the inference layout "cA".
class SectionOrder {
 public:
  SectionOrder() = default;
  /// Throws InvalidInput on duplicates.
  explicit SectionOrder(std::vector<Section> sections);

  static SectionOrder from_code(std::string_view code);
  static SectionOrder training() { return from_code("cAd"); }
  static SectionOrder inference() { return from_code("cA"); }

  std::string code() const;
  bool contains(Section s) const;
  bool complete() const { return contains(Section::Answer); }
  /// Position of `s`, or -1 when absent.
  int index_of(Section s) const;
  bool precedes(Section a, Section b) const;

  const std::vector<Section>& sections() const noexcept { return sections_; }
  std::size_t size() const noexcept { return sections_.size(); }

  bool operator==(const SectionOrder&) const = default;

 private:
  std::vector<Section> sections_;
};

enum class DiagnosticCode {
  UnclosedTag,
  NestedTag,
  DuplicateSection,
  EmptySection,
  StrayCloseTag,
  StrayText,
  MalformedPayload,
};

std::string_view to_string(DiagnosticCode code);

struct Diagnostic {
  DiagnosticCode code;
  std::optional<Section> section;
  std::size_t offset = 0;
  std::string detail;
};

struct StructuredResponse {
  std::optional<std::string> concise;
  std::optional<std::string> answer_raw;
  std::optional<geometry::Answer> answer;
  std::optional<std::string> detailed;
  SectionOrder order;
  std::string raw;
  std::vector<Diagnostic> diagnostics;

  const std::optional<std::string>& text(Section s) const;
  bool has(DiagnosticCode code) const;
  /// Same sections, contents, decoded answer and order; ignores raw text and diagnostics.
  bool same_structure(const StructuredResponse& other) const;
};

/// Total function: never throws. Defects are recorded in `diagnostics` and the affected
/// section is left absent.
StructuredResponse parse(std::string_view raw);

/// Decodes `{"bbox":[x1,y1,x2,y2], "points":[[x,y],...]}`; extra keys are ignored.
/// Throws MalformedPayload.
geometry::Answer decode_answer(std::string_view payload);

/// Compact JSON for an answer, integral coordinates printed without a fraction.
std::string encode_answer(const geometry::Answer& answer);

/// Emits tags in `resp.order`. Throws InvalidInput when the order lacks Answer, a section
/// in the order has no content, or content would not survive a re-parse.
std::string serialize(const StructuredResponse& resp);

/// Observed section order of a parsed response.
SectionOrder detect_order(const StructuredResponse& resp);

}  // namespace tforge::response

#endif  // TFORGE_RESPONSE_HPP
