#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "apn/tensor.hpp"

namespace apn {

struct CenterBox;

// Corner-form box in pixels: (x1, y1) top-left, (x2, y2) bottom-right.
struct CornerBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  CenterBox to_center() const;
};

// Center-form box in pixels.
struct CenterBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  CornerBox to_corner() const { return {cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0}; }
};

inline CenterBox CornerBox::to_center() const {
  return {(x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1};
}

using Vec4 = std::array<double, 4>;

// Intersection over union; 0 for disjoint boxes and for an empty union.
double iou(const CornerBox& a, const CornerBox& b);

// Search patch of (search_w x search_h) pixels observed through a (w x h)
// response map with total stride `stride`.
struct GridGeometry {
  double search_w = 0.0;
  double search_h = 0.0;
  double stride = 1.0;
  int w = 1;
  int h = 1;

  // Throws ConfigError when the lattice leaves the patch.
  void validate() const;

  int count() const { return w * h; }
  int index(int i, int j) const { return j * w + i; }

  // Receptive-field center of cell (i, j); i runs along x, j along y.
  // Throws UsageError for indices outside the map.
  std::pair<double, double> point(int i, int j) const;
};

// Minimum anchor side after decoding, in pixels.
inline constexpr double kMinAnchorSide = 1e-3;
// Clamp applied to log-space size deltas before exponentiation.
inline constexpr double kMaxLogDelta = 10.0;

// Distances (left, top, right, bottom) from point (px, py) to the edges of g.
// Components go negative for points outside g.
Vec4 edge_distances(double px, double py, const CornerBox& g);

// (1, 4, h, w) map of edge_distances at every grid point.
Tensor apn_regression_labels(const GridGeometry& geom, const CornerBox& g);

// (1, 1, h, w) binary map: 1 where the grid point lies inside g dilated about
// its center to area_ratio times its area (boundary inclusive).
Tensor quality_mask(const GridGeometry& geom, const CornerBox& g, double area_ratio);

// Anchor proposed at (i, j) by offsets (left, top, right, bottom).
CenterBox decode_anchor(const GridGeometry& geom, int i, int j, const Vec4& offsets);

// Anchors for batch entry n of a (N, 4, h, w) offset map, row-major.
std::vector<CenterBox> decode_anchor_map(const GridGeometry& geom, const Tensor& offsets, int n);

// Center/size deltas of g relative to anchor. Throws LabelError when g has
// non-positive width or height.
Vec4 refine_targets(const CenterBox& anchor, const CenterBox& g);

// Inverse of refine_targets.
CornerBox apply_refinement(const CenterBox& anchor, const Vec4& pred);

// sqrt(min(l,r)/max(l,r) * min(t,b)/max(t,b)); 0 when any distance is <= 0.
double centerness(double px, double py, const CornerBox& g);

enum class Cls1Label : std::int8_t { Negative = 0, Positive = 1, Ignore = -1 };

struct ClassificationLabels {
  std::vector<Cls1Label> cls1;
  std::vector<std::uint8_t> cls2;  // 1 = grid point strictly inside g
  std::vector<double> cls3;        // centerness target
};

// cls1 marks IoU >= iou_pos and the first global IoU maximum positive,
// IoU <= iou_neg negative, everything else ignored.
ClassificationLabels classification_labels(const GridGeometry& geom, std::span<const CenterBox> anchors,
                                           const CornerBox& g, double iou_pos, double iou_neg);

struct LabelConfig {
  double area_ratio = 2.0;
  double iou_pos = 0.6;
  double iou_neg = 0.3;
};

// Every training target for one search patch.
struct LabelBundle {
  CornerBox gt;
  Tensor apn_targets;     // (1, 4, h, w)
  Tensor quality_mask;    // (1, 1, h, w)
  Tensor refine_targets;  // (1, 4, h, w)
  std::vector<CenterBox> anchors;
  ClassificationLabels cls;
};

// Validates g (positive area) and builds all labels against the given anchors.
LabelBundle build_labels(const GridGeometry& geom, const CornerBox& g, std::vector<CenterBox> anchors,
                         const LabelConfig& cfg);

}  // namespace apn
