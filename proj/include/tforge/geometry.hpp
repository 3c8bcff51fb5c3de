#ifndef TFORGE_GEOMETRY_HPP
#define TFORGE_GEOMETRY_HPP

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "tforge/error.hpp"

namespace tforge::geometry {

template <typename Scalar>
using Point = Eigen::Matrix<Scalar, 2, 1>;

/// Axis-aligned box in continuous pixel coordinates; min() = (x1, y1), max() = (x2, y2).
template <typename Scalar>
using Box = Eigen::AlignedBox<Scalar, 2>;

using Pointd = Point<double>;
using Boxd = Box<double>;

/// Builds a box from corner coordinates, swapping corners so x1 <= x2 and y1 <= y2.
/// Throws InvalidInput on non-finite coordinates.
template <typename Scalar>
Box<Scalar> make_box(Scalar x1, Scalar y1, Scalar x2, Scalar y2) {
  using std::isfinite;
  if (!isfinite(x1) || !isfinite(y1) || !isfinite(x2) || !isfinite(y2)) {
    throw Error(ErrorKind::InvalidInput, "box has non-finite coordinates");
  }
  return Box<Scalar>(Point<Scalar>(std::min(x1, x2), std::min(y1, y2)),
                     Point<Scalar>(std::max(x1, x2), std::max(y1, y2)));
}

template <typename Scalar>
bool is_finite(const Box<Scalar>& b) {
  return b.min().allFinite() && b.max().allFinite();
}

template <typename Scalar>
Scalar area(const Box<Scalar>& b) {
  const Point<Scalar> size = (b.max() - b.min()).cwiseMax(Scalar(0));
  return size.prod();
}

/// The answer payload: one box plus zero or more points.
template <typename Scalar>
struct GeometricAnswer {
  Box<Scalar> box;
  std::vector<Point<Scalar>> points;

  bool operator==(const GeometricAnswer& other) const {
    return box.min() == other.box.min() && box.max() == other.box.max() &&
           points == other.points;
  }
};

using Answer = GeometricAnswer<double>;

/// Continuous-area intersection over union. Degenerate unions (both boxes zero area) give 0.
template <typename Scalar>
Scalar box_iou(const Box<Scalar>& a, const Box<Scalar>& b) {
  if (!is_finite(a) || !is_finite(b)) {
    throw Error(ErrorKind::InvalidInput, "box_iou: non-finite coordinates");
  }
  const Point<Scalar> lo = a.min().cwiseMax(b.min());
  const Point<Scalar> hi = a.max().cwiseMin(b.max());
  const Point<Scalar> overlap = (hi - lo).cwiseMax(Scalar(0));
  const Scalar inter = overlap.prod();
  const Scalar uni = area(a) + area(b) - inter;
  if (!(uni > Scalar(0))) return Scalar(0);
  return std::clamp(inter / uni, Scalar(0), Scalar(1));
}

struct L1Options {
  enum class Pairing {
    /// i-th point to i-th point; unmatched points cost `missing_point_penalty` each.
    Positional,
    /// point counts must agree.
    Strict,
  };
  enum class Aggregation { Mean, Sum };

  Pairing pairing = Pairing::Positional;
  Aggregation aggregation = Aggregation::Mean;
  bool include_points = true;
  /// Usually the image diagonal. NaN means "unknown": mismatched counts then fail.
  double missing_point_penalty = std::numeric_limits<double>::quiet_NaN();
};

/// L1 distance between two geometric prompts.
///
/// With the default options this is the mean absolute difference over the four box
/// coordinates and every paired point coordinate. Each unmatched point adds
/// `missing_point_penalty` to the sum and contributes two coordinates to the divisor.
template <typename Scalar>
Scalar prompt_l1(const GeometricAnswer<Scalar>& pred, const GeometricAnswer<Scalar>& gt,
                 const L1Options& opts = {}) {
  if (!is_finite(pred.box) || !is_finite(gt.box)) {
    throw Error(ErrorKind::InvalidInput, "prompt_l1: non-finite box");
  }
  Scalar sum = (pred.box.min() - gt.box.min()).cwiseAbs().sum() +
               (pred.box.max() - gt.box.max()).cwiseAbs().sum();
  std::size_t coords = 4;
  if (opts.include_points) {
    const std::size_t n = pred.points.size();
    const std::size_t m = gt.points.size();
    if (n != m) {
      if (opts.pairing == L1Options::Pairing::Strict) {
        throw Error(ErrorKind::InvalidInput, "prompt_l1: point counts differ");
      }
      if (!std::isfinite(opts.missing_point_penalty)) {
        throw Error(ErrorKind::InvalidInput,
                    "prompt_l1: point counts differ and no missing-point penalty is set");
      }
    }
    const std::size_t paired = std::min(n, m);
    for (std::size_t i = 0; i < paired; ++i) {
      if (!pred.points[i].allFinite() || !gt.points[i].allFinite()) {
        throw Error(ErrorKind::InvalidInput, "prompt_l1: non-finite point");
      }
      sum += (pred.points[i] - gt.points[i]).cwiseAbs().sum();
    }
    const std::size_t missing = std::max(n, m) - paired;
    if (missing > 0) sum += Scalar(missing) * Scalar(opts.missing_point_penalty);
    coords += 2 * std::max(n, m);
  }
  if (opts.aggregation == L1Options::Aggregation::Sum) return sum;
  return sum / Scalar(coords);
}

/// Row-major boolean grid, rows = height. Used for brute-force checks and RLE encoding.
using MaskGrid = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Binary mask stored as run lengths over the row-major grid, alternating
/// background/foreground and starting with background.
class Mask {
 public:
  /// Validates dimensions and run sum; zero-length interior runs are merged away.
  Mask(int width, int height, std::vector<std::uint32_t> runs);

  static Mask from_grid(const MaskGrid& grid);
  static Mask empty(int width, int height);
  /// Parses the text format: `W H` header then whitespace-separated run lengths.
  static Mask parse_rle(std::string_view text);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  const std::vector<std::uint32_t>& runs() const noexcept { return runs_; }
  std::uint64_t foreground_count() const noexcept;

  MaskGrid to_grid() const;
  std::string to_rle() const;

  bool operator==(const Mask& other) const = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint32_t> runs_;
};

/// Appends alternating runs while keeping the encoding canonical.
class RunBuilder {
 public:
  void push(bool foreground, std::uint64_t length);
  std::vector<std::uint32_t> finish() &&;

 private:
  std::vector<std::uint32_t> runs_;
  bool current_fg_ = false;
};

/// Foreground = integer pixels whose centers (i + 0.5, j + 0.5) satisfy x1 <= cx < x2 and
/// y1 <= cy < y2, clipped to the image.
template <typename Scalar>
Mask rasterize_box(const Box<Scalar>& b, int width, int height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::InvalidInput, "rasterize_box: image dimensions must be positive");
  }
  if (!is_finite(b)) throw Error(ErrorKind::InvalidInput, "rasterize_box: non-finite box");
  auto first_inside = [](Scalar lo, int limit) {
    const double v = std::ceil(double(lo) - 0.5);
    return int(std::clamp(v, 0.0, double(limit)));
  };
  const int c0 = first_inside(b.min().x(), width);
  const int c1 = first_inside(b.max().x(), width);
  const int r0 = first_inside(b.min().y(), height);
  const int r1 = first_inside(b.max().y(), height);
  RunBuilder builder;
  if (c0 >= c1 || r0 >= r1) {
    builder.push(false, std::uint64_t(width) * std::uint64_t(height));
    return Mask(width, height, std::move(builder).finish());
  }
  builder.push(false, std::uint64_t(r0) * width);
  for (int r = r0; r < r1; ++r) {
    builder.push(false, std::uint64_t(c0));
    builder.push(true, std::uint64_t(c1 - c0));
    builder.push(false, std::uint64_t(width - c1));
  }
  builder.push(false, std::uint64_t(height - r1) * width);
  return Mask(width, height, std::move(builder).finish());
}

struct MaskOverlap {
  double iou = 0.0;
  std::uint64_t intersection = 0;
  std::uint64_t union_count = 0;
};

/// |a & b| / |a | b| computed on the run encodings. Two empty masks give IoU 1 with counts (0, 0).
MaskOverlap mask_iou(const Mask& a, const Mask& b);

/// Tight box around foreground pixel edges; (0, 0, 0, 0) for an empty mask.
Boxd bounding_box(const Mask& m);

}  // namespace tforge::geometry

#endif  // TFORGE_GEOMETRY_HPP
