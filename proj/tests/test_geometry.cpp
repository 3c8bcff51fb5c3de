#include <doctest.h>

#include "generators.hpp"
#include "tforge/geometry.hpp"

using namespace tforge;
using namespace tforge::geometry;

namespace {

/// Pixel-by-pixel foreground count of the intersection and union.
std::pair<std::uint64_t, std::uint64_t> brute_counts(const MaskGrid& a, const MaskGrid& b) {
  std::uint64_t inter = 0, uni = 0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      inter += (a(r, c) && b(r, c)) ? 1 : 0;
      uni += (a(r, c) || b(r, c)) ? 1 : 0;
    }
  }
  return {inter, uni};
}

/// Pixel-center containment, one pixel at a time.
MaskGrid brute_raster(const Boxd& b, int w, int h) {
  MaskGrid g = MaskGrid::Zero(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double cx = c + 0.5, cy = r + 0.5;
      g(r, c) = (b.min().x() <= cx && cx < b.max().x() && b.min().y() <= cy && cy < b.max().y());
    }
  }
  return g;
}

Answer ans(double x1, double y1, double x2, double y2, std::vector<Pointd> pts = {}) {
  return Answer{make_box(x1, y1, x2, y2), std::move(pts)};
}

}  // namespace

TEST_CASE("box_iou examples") {
  CHECK(box_iou(make_box(0.0, 0.0, 10.0, 10.0), make_box(0.0, 0.0, 10.0, 10.0)) == 1.0);
  CHECK(box_iou(make_box(0.0, 0.0, 10.0, 10.0), make_box(20.0, 20.0, 30.0, 30.0)) == 0.0);
  CHECK(box_iou(make_box(0.0, 0.0, 10.0, 10.0), make_box(5.0, 0.0, 15.0, 10.0)) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(box_iou(make_box(1.0, 1.0, 1.0, 5.0), make_box(1.0, 1.0, 1.0, 5.0)) == 0.0);
}

TEST_CASE("box_iou rejects non-finite input") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(make_box(0.0, 0.0, nan, 1.0), Error);
  Boxd bad(Pointd(0, 0), Pointd(nan, 1));
  CHECK_THROWS_AS(box_iou(bad, make_box(0.0, 0.0, 1.0, 1.0)), Error);
}

TEST_CASE("make_box normalizes swapped corners") {
  const Boxd b = make_box(10.0, 20.0, 0.0, 5.0);
  CHECK(b.min() == Pointd(0, 5));
  CHECK(b.max() == Pointd(10, 20));
}

TEST_CASE("box_iou is symmetric and bounded") {
  gen::Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const Boxd a = gen::box(rng, 50), b = gen::box(rng, 50);
    const double ab = box_iou(a, b);
    CHECK(ab == box_iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
  }
}

TEST_CASE("prompt_l1 examples") {
  CHECK(prompt_l1(ans(0, 0, 10, 10), ans(0, 0, 10, 10)) == 0.0);
  CHECK(prompt_l1(ans(4, 0, 14, 10), ans(0, 0, 10, 10)) == 2.0);
  // per-coordinate oracle: four box diffs of 1 and two point diffs of 2 over 6 coordinates
  const double expected = (1.0 * 4 + 2.0 * 2) / 6.0;
  CHECK(prompt_l1(ans(1, 1, 11, 11, {Pointd(4, 4)}), ans(0, 0, 10, 10, {Pointd(2, 2)})) ==
        doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("prompt_l1 pairing rules") {
  const Answer two = ans(0, 0, 10, 10, {Pointd(1, 1), Pointd(2, 2)});
  const Answer one = ans(0, 0, 10, 10, {Pointd(1, 1)});
  SUBCASE("unset penalty rejects mismatched counts") {
    CHECK_THROWS_AS(prompt_l1(two, one), Error);
  }
  SUBCASE("strict pairing rejects mismatched counts") {
    L1Options o;
    o.pairing = L1Options::Pairing::Strict;
    o.missing_point_penalty = 5.0;
    CHECK_THROWS_AS(prompt_l1(two, one, o), Error);
  }
  SUBCASE("positional pairing charges the penalty") {
    L1Options o;
    o.missing_point_penalty = 9.0;
    // one unmatched point: sum 9 over 4 + 2*2 coordinates
    CHECK(prompt_l1(two, one, o) == doctest::Approx(9.0 / 8.0));
    o.aggregation = L1Options::Aggregation::Sum;
    CHECK(prompt_l1(two, one, o) == 9.0);
  }
  SUBCASE("box-only ignores points") {
    L1Options o;
    o.include_points = false;
    CHECK(prompt_l1(two, one, o) == 0.0);
  }
}

TEST_CASE("prompt_l1 identity and triangle inequality") {
  gen::Rng rng(12);
  L1Options o;
  o.missing_point_penalty = 141.0;
  for (int i = 0; i < 2000; ++i) {
    const Answer a = gen::answer(rng, 3), b = gen::answer(rng, 3), c = gen::answer(rng, 3);
    CHECK(prompt_l1(a, a, o) == 0.0);
    // the mean divisor depends on the larger point count, so check the sum form
    L1Options s = o;
    s.aggregation = L1Options::Aggregation::Sum;
    CHECK(prompt_l1(a, c, s) <= prompt_l1(a, b, s) + prompt_l1(b, c, s) + 1e-9);
    if (a.points.size() == b.points.size() && b.points.size() == c.points.size()) {
      CHECK(prompt_l1(a, c, o) <= prompt_l1(a, b, o) + prompt_l1(b, c, o) + 1e-9);
    }
  }
}

TEST_CASE("rasterize_box examples") {
  CHECK(rasterize_box(make_box(0.0, 0.0, 2.0, 2.0), 4, 4).foreground_count() == 4);
  CHECK(rasterize_box(make_box(10.0, 10.0, 20.0, 20.0), 4, 4).foreground_count() == 0);
  CHECK(rasterize_box(make_box(-5.0, -5.0, 50.0, 50.0), 4, 4).foreground_count() == 16);
  CHECK_THROWS_AS(rasterize_box(make_box(0.0, 0.0, 1.0, 1.0), 0, 4), Error);
}

TEST_CASE("rasterize_box matches pixel-center containment") {
  gen::Rng rng(13);
  for (int i = 0; i < 1500; ++i) {
    const int w = gen::integer(rng, 1, 12), h = gen::integer(rng, 1, 12);
    const Boxd b = gen::lattice_box(rng, std::max(w, h));
    CHECK((rasterize_box(b, w, h).to_grid() == brute_raster(b, w, h)).all());
  }
}

TEST_CASE("mask_iou examples") {
  MaskGrid a = MaskGrid::Zero(10, 10), b = MaskGrid::Zero(10, 10);
  a.leftCols(5).setOnes();
  SUBCASE("identical") { CHECK(mask_iou(Mask::from_grid(a), Mask::from_grid(a)).iou == 1.0); }
  SUBCASE("complementary") {
    b = (a == 0).cast<std::uint8_t>();
    CHECK(mask_iou(Mask::from_grid(a), Mask::from_grid(b)).iou == 0.0);
  }
  SUBCASE("50 pixel overlap of 100 pixel masks") {
    MaskGrid c = MaskGrid::Zero(20, 10), d = MaskGrid::Zero(20, 10);
    c.topRows(10).setOnes();
    d.middleRows(5, 10).setOnes();
    const MaskOverlap o = mask_iou(Mask::from_grid(c), Mask::from_grid(d));
    CHECK(o.intersection == 50);
    CHECK(o.union_count == 150);
    CHECK(o.iou == 50.0 / 150.0);
  }
  SUBCASE("two empty masks") {
    const MaskOverlap o = mask_iou(Mask::empty(3, 3), Mask::empty(3, 3));
    CHECK(o.iou == 1.0);
    CHECK(o.union_count == 0);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(mask_iou(Mask::empty(3, 3), Mask::empty(3, 4)), Error);
  }
}

TEST_CASE("mask_iou counts match the pixel oracle") {
  gen::Rng rng(14);
  for (int i = 0; i < 500; ++i) {
    const int w = gen::integer(rng, 1, 20), h = gen::integer(rng, 1, 20);
    const MaskGrid a = gen::grid(rng, w, h, gen::uniform(rng, 0, 1));
    const MaskGrid b = gen::grid(rng, w, h, gen::uniform(rng, 0, 1));
    const Mask ma = Mask::from_grid(a), mb = Mask::from_grid(b);
    const MaskOverlap o = mask_iou(ma, mb);
    const auto [inter, uni] = brute_counts(a, b);
    CHECK(o.intersection == inter);
    CHECK(o.union_count == uni);
    CHECK(o.intersection <= std::min(ma.foreground_count(), mb.foreground_count()));
    CHECK(o.union_count == ma.foreground_count() + mb.foreground_count() - o.intersection);
  }
}

TEST_CASE("RLE round trip") {
  gen::Rng rng(15);
  for (int i = 0; i < 500; ++i) {
    const int w = gen::integer(rng, 1, 25), h = gen::integer(rng, 1, 25);
    const MaskGrid g = gen::grid(rng, w, h, gen::uniform(rng, 0, 1));
    const Mask m = Mask::from_grid(g);
    CHECK(Mask::parse_rle(m.to_rle()) == m);
    CHECK((Mask::parse_rle(m.to_rle()).to_grid() == g).all());
  }
}

TEST_CASE("RLE parsing") {
  const Mask m = Mask::parse_rle("3 2\n1 2 3");
  CHECK(m.width() == 3);
  CHECK(m.foreground_count() == 2);
  CHECK(m.to_rle() == "3 2\n1 2 3");
  CHECK_THROWS_AS(Mask::parse_rle("3 2\n1 2"), Error);
  CHECK_THROWS_AS(Mask::parse_rle("3 x\n6"), Error);
  CHECK_THROWS_AS(Mask::parse_rle(""), Error);
  CHECK(Mask::parse_rle("2 2\n0 4").foreground_count() == 4);
}

TEST_CASE("bounding_box of a mask") {
  MaskGrid g = MaskGrid::Zero(6, 8);
  g.block(1, 2, 3, 4).setOnes();
  const Boxd b = bounding_box(Mask::from_grid(g));
  CHECK(b.min() == Pointd(2, 1));
  CHECK(b.max() == Pointd(6, 4));
  CHECK(rasterize_box(b, 8, 6) == Mask::from_grid(g));
  CHECK(area(bounding_box(Mask::empty(4, 4))) == 0.0);
}
