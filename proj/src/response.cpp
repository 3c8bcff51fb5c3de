#include "tforge/response.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include <json.hpp>

#include "tforge/numfmt.hpp"

namespace tforge::response {
namespace {

constexpr std::array<Section, 3> kAllSections = {Section::Concise, Section::Answer,
                                                 Section::Detailed};

std::string open_tag(Section s) { return "<" + std::string(tag_name(s)) + ">"; }
std::string close_tag(Section s) { return "</" + std::string(tag_name(s)) + ">"; }

struct TagMatch {
  Section section;
  bool closing;
  std::size_t length;
};

std::optional<TagMatch> match_tag(std::string_view text, std::size_t pos) {
  for (Section s : kAllSections) {
    const std::string open = open_tag(s);
    if (text.compare(pos, open.size(), open) == 0) return TagMatch{s, false, open.size()};
    const std::string close = close_tag(s);
    if (text.compare(pos, close.size(), close) == 0) return TagMatch{s, true, close.size()};
  }
  return std::nullopt;
}

bool contains_any_tag(std::string_view text) {
  for (Section s : kAllSections) {
    if (text.find(open_tag(s)) != std::string_view::npos) return true;
    if (text.find(close_tag(s)) != std::string_view::npos) return true;
  }
  return false;
}

bool has_visible_text(std::string_view text) {
  return std::any_of(text.begin(), text.end(),
                     [](unsigned char c) { return !std::isspace(c); });
}

std::optional<std::string>& slot(StructuredResponse& r, Section s) {
  switch (s) {
    case Section::Concise: return r.concise;
    case Section::Answer: return r.answer_raw;
    case Section::Detailed: return r.detailed;
  }
  return r.concise;
}

char section_code(Section s) {
  switch (s) {
    case Section::Concise: return 'c';
    case Section::Answer: return 'A';
    case Section::Detailed: return 'd';
  }
  return '?';
}

double json_number(const nlohmann::json& v) {
  if (!v.is_number()) throw Error(ErrorKind::MalformedPayload, "coordinate is not a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw Error(ErrorKind::MalformedPayload, "coordinate is not finite");
  return d;
}

}  // namespace

std::string_view tag_name(Section s) {
  switch (s) {
    case Section::Concise: return "think";
    case Section::Answer: return "answer";
    case Section::Detailed: return "d_think";
  }
  return "";
}

SectionOrder::SectionOrder(std::vector<Section> sections) : sections_(std::move(sections)) {
  for (std::size_t i = 0; i < sections_.size(); ++i) {
    for (std::size_t j = i + 1; j < sections_.size(); ++j) {
      if (sections_[i] == sections_[j]) {
        throw Error(ErrorKind::InvalidInput, "section order has duplicate sections");
      }
    }
  }
}

SectionOrder SectionOrder::from_code(std::string_view code) {
  std::vector<Section> sections;
  for (char ch : code) {
    switch (ch) {
      case 'c': sections.push_back(Section::Concise); break;
      case 'A': sections.push_back(Section::Answer); break;
      case 'd': sections.push_back(Section::Detailed); break;
      default:
        throw Error(ErrorKind::InvalidInput,
                    "unknown section code '" + std::string(1, ch) + "' (use c, A, d)");
    }
  }
  return SectionOrder(std::move(sections));
}

std::string SectionOrder::code() const {
  std::string out;
  for (Section s : sections_) out += section_code(s);
  return out;
}

bool SectionOrder::contains(Section s) const { return index_of(s) >= 0; }

int SectionOrder::index_of(Section s) const {
  const auto it = std::find(sections_.begin(), sections_.end(), s);
  return it == sections_.end() ? -1 : int(it - sections_.begin());
}

bool SectionOrder::precedes(Section a, Section b) const {
  const int ia = index_of(a);
  const int ib = index_of(b);
  return ia >= 0 && ib >= 0 && ia < ib;
}

std::string_view to_string(DiagnosticCode code) {
  switch (code) {
    case DiagnosticCode::UnclosedTag: return "unclosed-tag";
    case DiagnosticCode::NestedTag: return "nested-tag";
    case DiagnosticCode::DuplicateSection: return "duplicate-section";
    case DiagnosticCode::EmptySection: return "empty-section";
    case DiagnosticCode::StrayCloseTag: return "stray-close-tag";
    case DiagnosticCode::StrayText: return "stray-text";
    case DiagnosticCode::MalformedPayload: return "malformed-payload";
  }
  return "unknown";
}

const std::optional<std::string>& StructuredResponse::text(Section s) const {
  return slot(const_cast<StructuredResponse&>(*this), s);
}

bool StructuredResponse::has(DiagnosticCode code) const {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [code](const Diagnostic& d) { return d.code == code; });
}

bool StructuredResponse::same_structure(const StructuredResponse& other) const {
  return concise == other.concise && answer_raw == other.answer_raw &&
         detailed == other.detailed && answer == other.answer && order == other.order;
}

geometry::Answer decode_answer(std::string_view payload) {
  const auto doc = nlohmann::json::parse(payload.begin(), payload.end(), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorKind::MalformedPayload, "answer is not valid JSON");
  if (!doc.is_object()) throw Error(ErrorKind::MalformedPayload, "answer is not a JSON object");
  const auto bbox = doc.find("bbox");
  if (bbox == doc.end()) throw Error(ErrorKind::MalformedPayload, "answer has no bbox");
  if (!bbox->is_array() || bbox->size() != 4) {
    throw Error(ErrorKind::MalformedPayload, "bbox must be [x1, y1, x2, y2]");
  }
  geometry::Answer answer;
  answer.box = geometry::make_box(json_number((*bbox)[0]), json_number((*bbox)[1]),
                                  json_number((*bbox)[2]), json_number((*bbox)[3]));
  const auto points = doc.find("points");
  if (points != doc.end()) {
    if (!points->is_array()) throw Error(ErrorKind::MalformedPayload, "points must be a list");
    for (const auto& p : *points) {
      if (!p.is_array() || p.size() != 2) {
        throw Error(ErrorKind::MalformedPayload, "each point must be [x, y]");
      }
      answer.points.emplace_back(json_number(p[0]), json_number(p[1]));
    }
  }
  return answer;
}

std::string encode_answer(const geometry::Answer& answer) {
  std::string out = "{\"bbox\":[";
  out += format_number(answer.box.min().x()) + ',' + format_number(answer.box.min().y()) + ',' +
         format_number(answer.box.max().x()) + ',' + format_number(answer.box.max().y()) + ']';
  if (!answer.points.empty()) {
    out += ",\"points\":[";
    for (std::size_t i = 0; i < answer.points.size(); ++i) {
      if (i > 0) out += ',';
      out += '[' + format_number(answer.points[i].x()) + ',' +
             format_number(answer.points[i].y()) + ']';
    }
    out += ']';
  }
  out += '}';
  return out;
}

StructuredResponse parse(std::string_view raw) {
  StructuredResponse resp;
  resp.raw = std::string(raw);
  std::array<bool, 3> seen{};
  std::array<bool, 3> defective{};
  std::vector<Section> order;

  auto note_gap = [&](std::size_t from, std::size_t to) {
    if (to > from && has_visible_text(raw.substr(from, to - from))) {
      resp.diagnostics.push_back({DiagnosticCode::StrayText, std::nullopt, from, {}});
    }
  };

  std::size_t pos = 0;
  std::size_t gap_start = 0;
  while (pos < raw.size()) {
    const std::size_t lt = raw.find('<', pos);
    if (lt == std::string_view::npos) break;
    const auto tag = match_tag(raw, lt);
    if (!tag) {
      pos = lt + 1;
      continue;
    }
    note_gap(gap_start, lt);
    const auto idx = static_cast<std::size_t>(tag->section);
    if (tag->closing) {
      resp.diagnostics.push_back({DiagnosticCode::StrayCloseTag, tag->section, lt, {}});
      pos = gap_start = lt + tag->length;
      continue;
    }
    const std::size_t content_start = lt + tag->length;
    const std::string close = close_tag(tag->section);
    const std::size_t close_at = raw.find(close, content_start);
    if (close_at == std::string_view::npos) {
      resp.diagnostics.push_back({DiagnosticCode::UnclosedTag, tag->section, lt, {}});
      defective[idx] = true;
      pos = gap_start = content_start;
      continue;
    }
    const std::string_view content = raw.substr(content_start, close_at - content_start);
    pos = gap_start = close_at + close.size();
    if (contains_any_tag(content)) {
      resp.diagnostics.push_back({DiagnosticCode::NestedTag, tag->section, lt, {}});
      defective[idx] = true;
      continue;
    }
    if (seen[idx] || defective[idx]) {
      resp.diagnostics.push_back({DiagnosticCode::DuplicateSection, tag->section, lt, {}});
      defective[idx] = true;
      continue;
    }
    if (content.empty()) {
      resp.diagnostics.push_back({DiagnosticCode::EmptySection, tag->section, lt, {}});
      defective[idx] = true;
      continue;
    }
    seen[idx] = true;
    slot(resp, tag->section) = std::string(content);
    order.push_back(tag->section);
  }
  note_gap(gap_start, raw.size());

  std::vector<Section> kept;
  for (Section s : order) {
    if (defective[static_cast<std::size_t>(s)]) {
      slot(resp, s).reset();
    } else {
      kept.push_back(s);
    }
  }
  resp.order = SectionOrder(std::move(kept));

  if (resp.answer_raw) {
    try {
      resp.answer = decode_answer(*resp.answer_raw);
    } catch (const Error& e) {
      resp.diagnostics.push_back({DiagnosticCode::MalformedPayload, Section::Answer,
                                  std::size_t(raw.find(open_tag(Section::Answer))), e.what()});
    }
  }
  return resp;
}

std::string serialize(const StructuredResponse& resp) {
  if (!resp.order.complete()) {
    throw Error(ErrorKind::InvalidInput, "serialize: order must contain the answer section");
  }
  std::string out;
  for (Section s : resp.order.sections()) {
    std::string content;
    if (s == Section::Answer && !resp.answer_raw) {
      if (!resp.answer) throw Error(ErrorKind::InvalidInput, "serialize: answer has no content");
      content = encode_answer(*resp.answer);
    } else {
      const auto& text = resp.text(s);
      if (!text || text->empty()) {
        throw Error(ErrorKind::InvalidInput,
                    "serialize: section <" + std::string(tag_name(s)) + "> has no content");
      }
      content = *text;
    }
    if (contains_any_tag(content)) {
      throw Error(ErrorKind::InvalidInput, "serialize: section content contains a tag");
    }
    out += open_tag(s);
    out += content;
    out += close_tag(s);
  }
  return out;
}

SectionOrder detect_order(const StructuredResponse& resp) { return resp.order; }

}  // namespace tforge::response
