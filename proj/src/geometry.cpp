#include "tforge/geometry.hpp"

#include <cctype>
#include <charconv>
#include <limits>
#include <sstream>

namespace tforge {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::MalformedPayload: return "malformed-payload";
    case ErrorKind::DegenerateEmbedding: return "degenerate-embedding";
    case ErrorKind::UndefinedDenominator: return "undefined-denominator";
    case ErrorKind::EmptySplit: return "empty-split";
    case ErrorKind::UndefinedFactor: return "undefined-factor";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::Provider: return "provider";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace tforge

namespace tforge::geometry {

void RunBuilder::push(bool foreground, std::uint64_t length) {
  if (length == 0) return;
  if (runs_.empty()) {
    if (foreground) runs_.push_back(0);
    runs_.push_back(0);
    current_fg_ = foreground;
  } else if (foreground != current_fg_) {
    runs_.push_back(0);
    current_fg_ = foreground;
  }
  const std::uint64_t total = runs_.back() + length;
  if (total > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorKind::InvalidInput, "mask run exceeds 32-bit length");
  }
  runs_.back() = static_cast<std::uint32_t>(total);
}

std::vector<std::uint32_t> RunBuilder::finish() && {
  if (runs_.empty()) runs_.push_back(0);
  return std::move(runs_);
}

Mask::Mask(int width, int height, std::vector<std::uint32_t> runs)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::InvalidInput, "mask dimensions must be positive");
  }
  // canonicalize: merge across zero-length interior runs
  RunBuilder builder;
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    builder.push(i % 2 == 1, runs[i]);
    sum += runs[i];
  }
  if (sum != std::uint64_t(width) * std::uint64_t(height)) {
    throw Error(ErrorKind::InvalidInput, "mask runs do not sum to width*height");
  }
  runs_ = std::move(builder).finish();
}

Mask Mask::empty(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::InvalidInput, "mask dimensions must be positive");
  }
  return Mask(width, height, {std::uint32_t(std::uint64_t(width) * std::uint64_t(height))});
}

Mask Mask::from_grid(const MaskGrid& grid) {
  RunBuilder builder;
  const Eigen::Index n = grid.size();
  const std::uint8_t* data = grid.data();
  Eigen::Index i = 0;
  while (i < n) {
    const bool fg = data[i] != 0;
    Eigen::Index j = i;
    while (j < n && (data[j] != 0) == fg) ++j;
    builder.push(fg, std::uint64_t(j - i));
    i = j;
  }
  return Mask(int(grid.cols()), int(grid.rows()), std::move(builder).finish());
}

MaskGrid Mask::to_grid() const {
  MaskGrid grid = MaskGrid::Zero(height_, width_);
  std::uint8_t* data = grid.data();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < runs_.size(); ++i) {
    if (i % 2 == 1) std::fill_n(data + offset, runs_[i], std::uint8_t(1));
    offset += runs_[i];
  }
  return grid;
}

std::uint64_t Mask::foreground_count() const noexcept {
  std::uint64_t count = 0;
  for (std::size_t i = 1; i < runs_.size(); i += 2) count += runs_[i];
  return count;
}

std::string Mask::to_rle() const {
  std::string out = std::to_string(width_) + ' ' + std::to_string(height_) + '\n';
  for (std::size_t i = 0; i < runs_.size(); ++i) {
    if (i > 0) out += ' ';
    out += std::to_string(runs_[i]);
  }
  return out;
}

Mask Mask::parse_rle(std::string_view text) {
  std::vector<std::uint64_t> values;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos >= text.size()) break;
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(text.data() + pos, text.data() + text.size(), v);
    if (ec != std::errc() ||
        (end != text.data() + text.size() && !std::isspace(static_cast<unsigned char>(*end)))) {
      throw Error(ErrorKind::InvalidInput, "mask RLE: expected non-negative integer");
    }
    values.push_back(v);
    pos = std::size_t(end - text.data());
  }
  if (values.size() < 3) {
    throw Error(ErrorKind::InvalidInput, "mask RLE: need header `W H` and at least one run");
  }
  if (values[0] == 0 || values[1] == 0 || values[0] > 1'000'000 || values[1] > 1'000'000) {
    throw Error(ErrorKind::InvalidInput, "mask RLE: bad dimensions");
  }
  std::vector<std::uint32_t> runs;
  runs.reserve(values.size() - 2);
  for (std::size_t i = 2; i < values.size(); ++i) {
    if (values[i] > std::numeric_limits<std::uint32_t>::max()) {
      throw Error(ErrorKind::InvalidInput, "mask RLE: run too long");
    }
    runs.push_back(std::uint32_t(values[i]));
  }
  return Mask(int(values[0]), int(values[1]), std::move(runs));
}

MaskOverlap mask_iou(const Mask& a, const Mask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorKind::InvalidInput, "mask_iou: dimension mismatch");
  }
  const auto& ra = a.runs();
  const auto& rb = b.runs();
  std::size_t ia = 0, ib = 0;
  std::uint64_t left_a = ra[0], left_b = rb[0];
  MaskOverlap out;
  // walk both run lists; each iteration consumes the shorter remaining run
  while (ia < ra.size() && ib < rb.size()) {
    if (left_a == 0) {
      if (++ia < ra.size()) left_a = ra[ia];
      continue;
    }
    if (left_b == 0) {
      if (++ib < rb.size()) left_b = rb[ib];
      continue;
    }
    const std::uint64_t step = std::min(left_a, left_b);
    const bool fa = ia % 2 == 1;
    const bool fb = ib % 2 == 1;
    if (fa && fb) out.intersection += step;
    if (fa || fb) out.union_count += step;
    left_a -= step;
    left_b -= step;
  }
  out.iou = out.union_count == 0 ? 1.0 : double(out.intersection) / double(out.union_count);
  return out;
}

Boxd bounding_box(const Mask& m) {
  int min_r = m.height(), max_r = -1, min_c = m.width(), max_c = -1;
  std::uint64_t offset = 0;
  const auto& runs = m.runs();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (i % 2 == 1 && runs[i] > 0) {
      const std::uint64_t first = offset;
      const std::uint64_t last = offset + runs[i] - 1;
      const int r_first = int(first / m.width());
      const int r_last = int(last / m.width());
      min_r = std::min(min_r, r_first);
      max_r = std::max(max_r, r_last);
      if (r_first != r_last) {
        min_c = 0;
        max_c = m.width() - 1;
      } else {
        min_c = std::min(min_c, int(first % m.width()));
        max_c = std::max(max_c, int(last % m.width()));
      }
    }
    offset += runs[i];
  }
  if (max_r < 0) return make_box(0.0, 0.0, 0.0, 0.0);
  return make_box(double(min_c), double(min_r), double(max_c + 1), double(max_r + 1));
}

}  // namespace tforge::geometry
