#include <algorithm>
#include <cmath>
#include <random>

#include "apn/error.hpp"
#include "apn/geometry.hpp"
#include "doctest.h"
#include "support/oracles.hpp"
#include "support/suites.hpp"

using namespace apn;

TEST_CASE("grid point") {
  const GridGeometry paper{287, 287, 8, 21, 21};
  CHECK(paper.point(0, 0).first == 59.5);
  const GridGeometry even{96, 80, 4, 12, 10};
  CHECK(even.point(6, 5).first == 48.0);
  CHECK(even.point(6, 5).second == 40.0);
  for (int i = 1; i < even.w; ++i) {
    CHECK(even.point(i, 0).first + even.point(even.w - i, 0).first == doctest::Approx(96.0));
  }
  CHECK_THROWS_AS(even.point(12, 0), UsageError);
  CHECK_THROWS_AS(even.point(0, -1), UsageError);
  CHECK_THROWS_AS((GridGeometry{20, 20, 8, 21, 21}.validate()), ConfigError);
}

TEST_CASE("iou") {
  const CornerBox a{0, 0, 2, 2}, b{1, 1, 3, 3};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, CornerBox{5, 5, 6, 6}) == 0.0);
  CHECK(iou(a, b) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  CHECK(iou(CornerBox{1, 1, 1, 1}, CornerBox{1, 1, 1, 1}) == 0.0);
}

TEST_CASE("iou: symmetric, bounded, and equal to a pixel count on integer boxes") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> pos(0, 40), size(1, 50);
  for (int n = 0; n < 300; ++n) {
    const int ax = pos(rng), ay = pos(rng), aw = size(rng), ah = size(rng);
    const int bx = pos(rng), by = pos(rng), bw = size(rng), bh = size(rng);
    const CornerBox a{double(ax), double(ay), double(ax + aw), double(ay + ah)};
    const CornerBox b{double(bx), double(by), double(bx + bw), double(by + bh)};
    const double v = iou(a, b);
    CHECK(v == iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(std::abs(v - testing::pixel_count_iou(ax, ay, ax + aw, ay + ah, bx, by, bx + bw, by + bh)) <= 0.01);
  }
}

TEST_CASE("regression labels") {
  const CornerBox g{90, 80, 120, 130};
  const Vec4 d = edge_distances(100, 100, g);
  CHECK(d == Vec4{10, 20, 20, 30});
  CHECK(edge_distances(90, 80, g) == Vec4{0, 0, 30, 50});
  const Vec4 out = edge_distances(0, 0, g);
  CHECK(out[0] < 0);
  CHECK(out[1] < 0);

  const GridGeometry geom{96, 96, 4, 12, 12};
  const Tensor x = apn_regression_labels(geom, CornerBox{30, 30, 60, 50});
  CHECK(x.shape() == Shape{1, 4, 12, 12});
  for (int j = 0; j < 12; ++j) {
    for (int i = 0; i < 12; ++i) {
      CHECK(x.at(0, 0, j, i) + x.at(0, 2, j, i) == doctest::Approx(30.0));
      CHECK(x.at(0, 1, j, i) + x.at(0, 3, j, i) == doctest::Approx(20.0));
    }
  }
}

TEST_CASE("quality mask") {
  // One-cell geometry puts the only point at (48, 48).
  const GridGeometry one{97, 97, 1, 1, 1};
  CHECK(one.point(0, 0) == std::pair{48.0, 48.0});
  CHECK(quality_mask(one, CornerBox{38, 28, 58, 68}, 2.0)[0] == 1.0);
  // Half-width 10 scales to 14.14; a point 15 off the center is out.
  CHECK(quality_mask(one, CornerBox{53, 28, 73, 68}, 2.0)[0] == 0.0);
  // g=(90,80,120,130) has center (105,105); the point (122,105) is 17 right of it.
  CHECK(quality_mask(one, CornerBox{90 - 74, 80 - 57, 120 - 74, 130 - 57}, 2.0)[0] == 1.0);
  CHECK(std::sqrt(2.0) * 15 == doctest::Approx(21.2132).epsilon(1e-5));
  CHECK_THROWS_AS(quality_mask(one, CornerBox{0, 0, 4, 4}, 1.0), ConfigError);
}

TEST_CASE("decode anchor") {
  const GridGeometry one{201, 201, 1, 1, 1};
  REQUIRE(one.point(0, 0) == std::pair{100.0, 100.0});
  const CenterBox c = decode_anchor(one, 0, 0, {10, 20, 20, 30});
  CHECK(c.cx == 105.0);
  CHECK(c.cy == 105.0);
  CHECK(c.w == 30.0);
  CHECK(c.h == 50.0);
  const CenterBox z = decode_anchor(one, 0, 0, {0, 0, 0, 0});
  CHECK(z.cx == 100.0);
  CHECK(z.w == kMinAnchorSide);
  CHECK(z.h == kMinAnchorSide);
  const CenterBox neg = decode_anchor(one, 0, 0, {-5, 1, 2, -9});
  CHECK(neg.w == kMinAnchorSide);
  CHECK(neg.h == kMinAnchorSide);
}

TEST_CASE("refinement targets and their inverse") {
  const CenterBox p{100, 100, 20, 40};
  const Vec4 r = refine_targets(p, CenterBox{110, 110, 40, 40});
  CHECK(r[0] == 0.5);
  CHECK(r[1] == 0.25);
  CHECK(r[2] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(r[3] == 0.0);
  CHECK(refine_targets(p, p) == Vec4{0, 0, 0, 0});

  const CornerBox same = apply_refinement(p, {0, 0, 0, 0});
  CHECK(same.x1 == 90.0);
  CHECK(same.y2 == 120.0);
  const CenterBox back = apply_refinement(p, {0.5, 0.25, std::log(2.0), 0}).to_center();
  CHECK(back.cx == doctest::Approx(110.0).epsilon(1e-15));
  CHECK(back.cy == doctest::Approx(110.0).epsilon(1e-15));
  CHECK(back.w == doctest::Approx(40.0).epsilon(1e-15));
  CHECK(back.h == doctest::Approx(40.0).epsilon(1e-15));

  // exp argument is clamped.
  const CenterBox huge = apply_refinement(p, {0, 0, 1e3, -1e3}).to_center();
  CHECK(huge.w == doctest::Approx(20 * std::exp(kMaxLogDelta)));
  CHECK(huge.h == doctest::Approx(40 * std::exp(-kMaxLogDelta)));
  CHECK_THROWS_AS(refine_targets(p, CenterBox{1, 1, 0, 3}), LabelError);
  CHECK_THROWS_AS(refine_targets(p, CenterBox{1, 1, 3, -1}), LabelError);
}

TEST_CASE("centerness") {
  const CornerBox g{90, 80, 120, 130};
  CHECK(centerness(100, 100, g) == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-15));
  CHECK(centerness(105, 105, g) == 1.0);
  CHECK(centerness(90, 100, g) == 0.0);
  CHECK(centerness(80, 100, g) == 0.0);
  // Ratio based: uniform scaling of everything leaves it unchanged.
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 0; n < 200; ++n) {
    const CornerBox b{u(rng) * 50, u(rng) * 50, 60 + u(rng) * 50, 60 + u(rng) * 50};
    const double px = 50 + u(rng) * 20, py = 50 + u(rng) * 20, k = 0.1 + 10 * u(rng);
    const CornerBox bk{b.x1 * k, b.y1 * k, b.x2 * k, b.y2 * k};
    CHECK(centerness(px * k, py * k, bk) == doctest::Approx(centerness(px, py, b)).epsilon(1e-12));
  }
}

TEST_CASE("classification labels") {
  const GridGeometry geom{96, 96, 8, 5, 5};
  const CornerBox g{30, 30, 60, 60};
  std::vector<CenterBox> anchors(25, CenterBox{10, 10, 4, 4});
  anchors[7] = g.to_center();
  const auto cls = classification_labels(geom, anchors, g, 0.6, 0.3);
  CHECK(cls.cls1[7] == Cls1Label::Positive);
  CHECK(cls.cls1[0] == Cls1Label::Negative);

  // No anchor reaches iou_pos: the best one is still positive.
  std::vector<CenterBox> far(25, CenterBox{90, 90, 4, 4});
  far[3] = CenterBox{45, 45, 60, 60};
  const auto forced = classification_labels(geom, far, g, 0.6, 0.3);
  CHECK(forced.cls1[3] == Cls1Label::Positive);
  CHECK(std::count(forced.cls1.begin(), forced.cls1.end(), Cls1Label::Positive) == 1);

  // A grid point at the exact center of the box.
  const GridGeometry centered{96, 96, 8, 4, 4};
  REQUIRE(centered.point(2, 2) == std::pair{48.0, 48.0});
  const auto c2 = classification_labels(centered, std::vector<CenterBox>(16, g.to_center()), CornerBox{38, 28, 58, 68},
                                        0.6, 0.3);
  CHECK(c2.cls3[centered.index(2, 2)] == 1.0);

  CHECK_THROWS_AS(classification_labels(geom, anchors, g, 0.3, 0.3), ConfigError);
  CHECK_THROWS_AS(classification_labels(geom, std::vector<CenterBox>(3), g, 0.6, 0.3), ShapeError);
}

TEST_CASE("build labels rejects degenerate boxes") {
  const GridGeometry geom{96, 96, 8, 5, 5};
  std::vector<CenterBox> anchors(25, CenterBox{48, 48, 10, 10});
  CHECK_THROWS_AS(build_labels(geom, CornerBox{30, 30, 30, 60}, anchors, LabelConfig{}), LabelError);
  CHECK_THROWS_AS(build_labels(geom, CornerBox{30, 30, 60, 20}, anchors, LabelConfig{}), LabelError);
  const LabelBundle b = build_labels(geom, CornerBox{30, 30, 60, 60}, anchors, LabelConfig{});
  CHECK(b.apn_targets.shape() == Shape{1, 4, 5, 5});
  CHECK(b.refine_targets.shape() == Shape{1, 4, 5, 5});
  CHECK(b.quality_mask.shape() == Shape{1, 1, 5, 5});
}

TEST_CASE("label oracle: 1000 random instances") {
  const auto r = testing::run_label_suite(1000, 2024);
  for (const auto& f : r.failures) MESSAGE(f);
  CHECK(r.checks > 100000);
  CHECK(r.ok());
}
