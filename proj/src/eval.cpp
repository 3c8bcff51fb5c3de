#include "tforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "tforge/error.hpp"
#include "tforge/numfmt.hpp"
#include "tforge/text.hpp"

namespace tforge::eval {

using geometry::Mask;
using response::Section;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorKind::MalformedPayload, what); }

std::string string_field(const nlohmann::json& j, const char* key, bool required) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) bad(std::string("missing field '") + key + "'");
    return {};
  }
  if (!it->is_string()) bad(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

double finite_number(const nlohmann::json& v, const std::string& what) {
  if (!v.is_number()) bad(what + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) bad(what + " must be finite");
  return d;
}

Mask mask_field(const nlohmann::json& v, const char* key, const ImageSize& image) {
  if (!v.is_string()) bad(std::string("field '") + key + "' must be an RLE string");
  Mask m = [&] {
    try {
      return Mask::parse_rle(v.get<std::string>());
    } catch (const Error& e) {
      bad(std::string("field '") + key + "': " + e.what());
    }
  }();
  if (m.width() != image.width || m.height() != image.height) {
    bad(std::string("field '") + key + "' dimensions differ from the image");
  }
  return m;
}

bool needs_quotes(std::string_view s) {
  return s.find_first_of(",\"\r\n") != std::string_view::npos;
}

std::string csv_cell(std::string_view s) {
  if (!needs_quotes(s)) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

/// File-name-safe form of a split name.
std::string file_stem(std::string_view split) {
  std::string out;
  for (char c : split) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? "_" : out;
}

void write_file(const std::filesystem::path& file, const std::string& content) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + file.string());
  out << content;
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "write failed for " + file.string());
}

struct Fold {
  std::size_t n = 0;
  double iou_sum = 0.0;
  std::uint64_t inter = 0;
  std::uint64_t uni = 0;
  double token_sum = 0.0;

  void add(const RecordScore& s) {
    ++n;
    iou_sum += s.iou;
    inter += s.intersection;
    uni += s.union_count;
    token_sum += double(s.tokens);
  }
  double ciou() const { return uni == 0 ? 1.0 : double(inter) / double(uni); }
};

}  // namespace

geometry::Answer EvalRecord::gt_answer() const {
  geometry::Answer a;
  a.box = gt_box ? *gt_box : geometry::bounding_box(*gt_mask);
  a.points = gt_points;
  return a;
}

geometry::Mask EvalRecord::gt_region() const {
  if (gt_mask) return *gt_mask;
  return geometry::rasterize_box(*gt_box, image.width, image.height);
}

EvalRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) bad("record must be a JSON object");
  EvalRecord r;
  r.id = string_field(j, "id", true);
  r.split = string_field(j, "split", true);
  r.instruction = string_field(j, "instruction", false);
  r.generation = string_field(j, "generation", true);
  if (j.contains("brevity_suffix") && !j["brevity_suffix"].is_null()) {
    r.brevity_suffix = string_field(j, "brevity_suffix", true);
  }

  const auto img = j.find("image");
  if (img == j.end() || !img->is_object()) bad("missing object field 'image'");
  auto dim = [&](const char* key) {
    const auto it = img->find(key);
    if (it == img->end() || !it->is_number_integer()) {
      bad(std::string("image.") + key + " must be an integer");
    }
    const auto v = it->get<std::int64_t>();
    if (v <= 0 || v > 1'000'000) bad(std::string("image.") + key + " must be positive");
    return int(v);
  };
  r.image.width = dim("width");
  r.image.height = dim("height");

  if (j.contains("gt_box") && !j["gt_box"].is_null()) {
    const auto& b = j["gt_box"];
    if (!b.is_array() || b.size() != 4) bad("gt_box must be [x1, y1, x2, y2]");
    r.gt_box = geometry::make_box(finite_number(b[0], "gt_box"), finite_number(b[1], "gt_box"),
                                  finite_number(b[2], "gt_box"), finite_number(b[3], "gt_box"));
  }
  if (j.contains("gt_mask") && !j["gt_mask"].is_null()) {
    r.gt_mask = mask_field(j["gt_mask"], "gt_mask", r.image);
  }
  if (!r.gt_box && !r.gt_mask) bad("record needs gt_box or gt_mask");
  if (j.contains("pred_mask") && !j["pred_mask"].is_null()) {
    r.pred_mask = mask_field(j["pred_mask"], "pred_mask", r.image);
  }
  if (j.contains("gt_points") && !j["gt_points"].is_null()) {
    const auto& pts = j["gt_points"];
    if (!pts.is_array()) bad("gt_points must be an array of [x, y]");
    for (const auto& p : pts) {
      if (!p.is_array() || p.size() != 2) bad("gt_points must be an array of [x, y]");
      r.gt_points.emplace_back(finite_number(p[0], "gt_points"), finite_number(p[1], "gt_points"));
    }
  }
  if (j.contains("mode") && !j["mode"].is_null()) {
    const std::string mode = string_field(j, "mode", true);
    if (mode == "inference") {
      r.inference = true;
    } else if (mode == "train") {
      r.inference = false;
    } else {
      bad("mode must be 'train' or 'inference'");
    }
  }
  return r;
}

Overlay load_overlay(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  Overlay out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (j.is_discarded() || !j.is_object()) bad(where + ": expected a JSON object");
    if (!j.contains("id") || !j["id"].is_string()) bad(where + ": missing string 'id'");
    out[j["id"].get<std::string>()] = j;
  }
  return out;
}

IngestResult ingest(std::istream& in, const Overlay* overlay) {
  IngestResult out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      ++out.skipped;
      out.diagnostics.push_back("line " + std::to_string(lineno) + ": invalid JSON");
      continue;
    }
    if (overlay && j.is_object() && j.contains("id") && j["id"].is_string()) {
      if (const auto it = overlay->find(j["id"].get<std::string>()); it != overlay->end()) {
        j.update(it->second);
      }
    }
    try {
      out.records.push_back(record_from_json(j));
    } catch (const Error& e) {
      ++out.skipped;
      out.diagnostics.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

IngestResult ingest(const std::filesystem::path& path, const Overlay* overlay) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  IngestResult r = ingest(in, overlay);
  if (in.bad()) throw Error(ErrorKind::Io, "read failed for " + path.string());
  return r;
}

RecordScore score_record(const EvalRecord& rec, const reward::RewardConfig& cfg,
                         const response::SectionOrder& order,
                         const embedding::EmbeddingProvider& provider) {
  const response::StructuredResponse resp = response::parse(rec.generation);
  const bool inference =
      rec.inference.value_or(rec.generation.find("<d_think>") == std::string::npos);
  std::vector<Section> required;
  for (Section s : order.sections()) {
    if (!(inference && s == Section::Detailed)) required.push_back(s);
  }

  RecordScore out;
  out.id = rec.id;
  out.split = rec.split;
  out.order = resp.order;

  const Mask gt = rec.gt_region();
  if (rec.pred_mask || resp.answer) {
    const Mask pred = rec.pred_mask
                          ? *rec.pred_mask
                          : geometry::rasterize_box(resp.answer->box, rec.image.width,
                                                    rec.image.height);
    const geometry::MaskOverlap o = geometry::mask_iou(pred, gt);
    out.iou = o.iou;
    out.intersection = o.intersection;
    out.union_count = o.union_count;
  } else {
    out.iou = 0.0;
    out.intersection = 0;
    out.union_count = gt.foreground_count();
  }

  for (Section s : {Section::Concise, Section::Detailed}) {
    if (const auto& t = resp.text(s)) out.tokens += text::count_tokens(*t, cfg.tokenizer_id);
  }
  reward::RewardConfig rcfg = cfg;
  // unset missing-point penalty means "image diagonal"
  if (std::isnan(rcfg.l1.missing_point_penalty)) {
    rcfg.l1.missing_point_penalty = std::hypot(double(rec.image.width), double(rec.image.height));
  }
  out.breakdown = reward::total_reward(resp, rec.gt_answer(), response::SectionOrder(required),
                                       rcfg, provider);
  return out;
}

const std::vector<double>& histogram_edges() {
  static const std::vector<double> edges = [] {
    std::vector<double> e;
    for (int k = 0; k <= 300; k += 10) e.push_back(double(k));
    e.push_back(std::numeric_limits<double>::infinity());
    return e;
  }();
  return edges;
}

SplitMetrics aggregate(std::span<const RecordScore> scores, const std::string& split) {
  if (scores.empty()) throw Error(ErrorKind::EmptySplit, "split '" + split + "' has no records");
  SplitMetrics m;
  m.split = split;
  m.histogram.assign(histogram_edges().size() - 1, 0);

  Fold all;
  std::map<std::string, Fold> orders;
  std::vector<std::size_t> tokens;
  tokens.reserve(scores.size());
  for (const auto& s : scores) {
    all.add(s);
    orders[s.order.code()].add(s);
    tokens.push_back(s.tokens);
    ++m.histogram[std::min<std::size_t>(s.tokens / 10, m.histogram.size() - 1)];
  }
  m.n = all.n;
  m.giou = all.iou_sum / double(all.n);
  m.ciou = all.ciou();
  if (all.uni == 0) {
    m.diagnostics.push_back("degenerate split '" + split + "': total union is 0, cIoU set to 1");
  }
  m.mean_tokens = all.token_sum / double(all.n);
  std::sort(tokens.begin(), tokens.end());
  const std::size_t mid = tokens.size() / 2;
  m.median_tokens = tokens.size() % 2 == 1 ? double(tokens[mid])
                                           : (double(tokens[mid - 1]) + double(tokens[mid])) / 2.0;
  for (const auto& [code, f] : orders) {
    m.by_order[code] = OrderMetrics{f.n, f.iou_sum / double(f.n), f.ciou(),
                                    f.token_sum / double(f.n)};
  }
  return m;
}

std::vector<SplitMetrics> aggregate_splits(std::span<const RecordScore> scores) {
  std::map<std::string, std::vector<RecordScore>> by_split;
  for (const auto& s : scores) by_split[s.split].push_back(s);
  std::vector<SplitMetrics> out;
  for (const auto& [name, group] : by_split) out.push_back(aggregate(group, name));
  return out;
}

ComparisonRow compare(const SplitMetrics& baseline, const SplitMetrics& candidate) {
  if (baseline.split != candidate.split) {
    throw Error(ErrorKind::InvalidInput, "cannot compare split '" + baseline.split +
                                             "' with split '" + candidate.split + "'");
  }
  if (candidate.mean_tokens == 0.0) {
    throw Error(ErrorKind::UndefinedFactor,
                "candidate split '" + candidate.split + "' has zero mean tokens");
  }
  ComparisonRow row;
  row.split = baseline.split;
  row.baseline_tokens = baseline.mean_tokens;
  row.candidate_tokens = candidate.mean_tokens;
  row.token_reduction_factor = baseline.mean_tokens / candidate.mean_tokens;
  row.delta_ciou = 100.0 * (candidate.ciou - baseline.ciou);
  row.delta_giou = 100.0 * (candidate.giou - baseline.giou);
  return row;
}

std::string format_subrow(const ComparisonRow& row) {
  // a factor below one means the candidate got longer; show it as an increase
  const bool reduced = row.token_reduction_factor >= 1.0;
  const double factor = reduced ? row.token_reduction_factor : 1.0 / row.token_reduction_factor;
  std::string delta = format_fixed(row.delta_ciou, 1);
  if (delta != "0.0" && delta.front() != '-') delta = "+" + delta;
  return format_fixed(factor, 1) + (reduced ? "×↓" : "×↑") + ", " + delta;
}

nlohmann::ordered_json to_json(const SplitMetrics& m) {
  nlohmann::ordered_json j;
  j["split"] = m.split;
  j["n"] = m.n;
  j["giou"] = m.giou;
  j["ciou"] = m.ciou;
  j["mean_tokens"] = m.mean_tokens;
  j["median_tokens"] = m.median_tokens;
  j["histogram"] = m.histogram;
  auto& orders = j["by_order"] = nlohmann::ordered_json::object();
  for (const auto& [code, o] : m.by_order) {
    orders[code] = {{"n", o.n}, {"giou", o.giou}, {"ciou", o.ciou},
                    {"mean_tokens", o.mean_tokens}};
  }
  j["diagnostics"] = m.diagnostics;
  return j;
}

SplitMetrics split_metrics_from_json(const nlohmann::json& j) {
  if (!j.is_object()) bad("split metrics must be an object");
  SplitMetrics m;
  m.split = string_field(j, "split", true);
  auto number = [&](const char* key, bool required) {
    const auto it = j.find(key);
    if (it == j.end()) {
      if (required) bad(std::string("missing field '") + key + "'");
      return 0.0;
    }
    return finite_number(*it, key);
  };
  m.mean_tokens = number("mean_tokens", true);
  m.ciou = number("ciou", true);
  m.giou = number("giou", false);
  m.median_tokens = number("median_tokens", false);
  const double n = number("n", false);
  if (n < 0.0) bad("n must be non-negative");
  m.n = std::size_t(n);
  if (j.contains("histogram")) {
    for (const auto& c : j["histogram"]) m.histogram.push_back(std::size_t(finite_number(c, "histogram")));
  }
  return m;
}

nlohmann::ordered_json to_json(const RecordScore& s) {
  const auto& b = s.breakdown;
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["split"] = s.split;
  j["order"] = s.order.code();
  j["iou"] = s.iou;
  j["intersection"] = s.intersection;
  j["union"] = s.union_count;
  j["tokens"] = s.tokens;
  j["format"] = b.format;
  j["iou_value"] = b.iou_value;
  j["iou_binary"] = b.iou_binary;
  j["l1_value"] = b.l1_value;
  j["l1_binary"] = b.l1_binary;
  j["s_sim"] = b.s_sim;
  j["s_concise"] = b.s_concise;
  j["r_distill"] = b.r_distill;
  j["gate"] = b.gate;
  j["r_task"] = b.r_task;
  j["r_train"] = b.r_train;
  j["len_concise"] = b.len_concise;
  j["len_detailed"] = b.len_detailed;
  j["diagnostics"] = b.diagnostics;
  return j;
}

void write_comparison_csv(const std::filesystem::path& file,
                          std::span<const ComparisonRow> comparisons) {
  std::ostringstream out;
  out << "split,baseline_tokens,candidate_tokens,token_reduction_factor,delta_ciou,delta_giou,"
         "subrow\n";
  for (const auto& c : comparisons) {
    out << csv_cell(c.split) << ',' << format_number(c.baseline_tokens) << ','
        << format_number(c.candidate_tokens) << ',' << format_number(c.token_reduction_factor)
        << ',' << format_number(c.delta_ciou) << ',' << format_number(c.delta_giou) << ','
        << csv_cell(format_subrow(c)) << '\n';
  }
  write_file(file, out.str());
}

void emit_report(const std::filesystem::path& dir, std::span<const RecordScore> scores,
                 std::span<const SplitMetrics> metrics, std::span<const ComparisonRow> comparisons,
                 const nlohmann::ordered_json& metadata) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

  const auto& edges = histogram_edges();
  std::ostringstream summary;
  summary << "split,n,giou,ciou,mean_tokens,median_tokens\n";
  std::ostringstream orders;
  orders << "split,order,n,giou,ciou,mean_tokens\n";
  nlohmann::ordered_json all = nlohmann::ordered_json::array();

  for (const auto& m : metrics) {
    const std::string stem = file_stem(m.split);
    std::ostringstream split;
    split << "id,order,iou,intersection,union,tokens,format,r_task,r_train\n";
    for (const auto& s : scores) {
      if (s.split != m.split) continue;
      split << csv_cell(s.id) << ',' << s.order.code() << ',' << format_number(s.iou) << ','
            << s.intersection << ',' << s.union_count << ',' << s.tokens << ','
            << s.breakdown.format << ',' << format_number(s.breakdown.r_task) << ','
            << format_number(s.breakdown.r_train) << '\n';
    }
    write_file(dir / ("split_" + stem + ".csv"), split.str());

    std::ostringstream hist;
    hist << "bin_left,bin_right,count\n";
    for (std::size_t b = 0; b < m.histogram.size(); ++b) {
      hist << format_number(edges[b]) << ',' << format_number(edges[b + 1]) << ','
           << m.histogram[b] << '\n';
    }
    write_file(dir / ("hist_" + stem + ".csv"), hist.str());

    summary << csv_cell(m.split) << ',' << m.n << ',' << format_number(m.giou) << ','
            << format_number(m.ciou) << ',' << format_number(m.mean_tokens) << ','
            << format_number(m.median_tokens) << '\n';
    for (const auto& [code, o] : m.by_order) {
      orders << csv_cell(m.split) << ',' << code << ',' << o.n << ',' << format_number(o.giou)
             << ',' << format_number(o.ciou) << ',' << format_number(o.mean_tokens) << '\n';
    }
    all.push_back(to_json(m));
  }
  write_file(dir / "summary.csv", summary.str());
  write_file(dir / "orders.csv", orders.str());
  write_comparison_csv(dir / "comparison.csv", comparisons);
  write_file(dir / "metrics.json", nlohmann::ordered_json{{"splits", all}}.dump(2) + "\n");
  write_file(dir / "metadata.json", metadata.dump(2) + "\n");
}

}  // namespace tforge::eval
