#include "apn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "apn/error.hpp"

namespace apn {

double iou(const CornerBox& a, const CornerBox& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = std::max(0.0, a.area()) + std::max(0.0, b.area()) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

void GridGeometry::validate() const {
  if (w < 1 || h < 1 || !(stride >= 1.0)) {
    throw ConfigError("grid geometry needs w, h, stride >= 1");
  }
  const auto [x0, y0] = point(0, 0);
  const auto [x1, y1] = point(w - 1, h - 1);
  if (x0 < 0.0 || y0 < 0.0 || x1 > search_w || y1 > search_h) {
    throw ConfigError("grid of " + std::to_string(w) + "x" + std::to_string(h) + " cells at stride " +
                      std::to_string(stride) + " does not fit a " + std::to_string(search_w) + "x" +
                      std::to_string(search_h) + " search patch");
  }
}

std::pair<double, double> GridGeometry::point(int i, int j) const {
  if (i < 0 || i >= w || j < 0 || j >= h) {
    throw UsageError("grid index (" + std::to_string(i) + "," + std::to_string(j) + ") outside " +
                     std::to_string(w) + "x" + std::to_string(h) + " map");
  }
  return {search_w / 2.0 + (i - w / 2.0) * stride, search_h / 2.0 + (j - h / 2.0) * stride};
}

Vec4 edge_distances(double px, double py, const CornerBox& g) {
  return {px - g.x1, py - g.y1, g.x2 - px, g.y2 - py};
}

Tensor apn_regression_labels(const GridGeometry& geom, const CornerBox& g) {
  Tensor out(Shape{1, 4, geom.h, geom.w});
  for (int j = 0; j < geom.h; ++j) {
    for (int i = 0; i < geom.w; ++i) {
      const auto [px, py] = geom.point(i, j);
      const Vec4 d = edge_distances(px, py, g);
      for (int k = 0; k < 4; ++k) out.at(0, k, j, i) = d[k];
    }
  }
  return out;
}

Tensor quality_mask(const GridGeometry& geom, const CornerBox& g, double area_ratio) {
  if (!(area_ratio > 1.0)) throw ConfigError("quality mask area ratio must exceed 1");
  const CenterBox c = g.to_center();
  const double k = std::sqrt(area_ratio);
  const double half_w = k * c.w / 2.0;
  const double half_h = k * c.h / 2.0;
  Tensor out(Shape{1, 1, geom.h, geom.w});
  for (int j = 0; j < geom.h; ++j) {
    for (int i = 0; i < geom.w; ++i) {
      const auto [px, py] = geom.point(i, j);
      const bool inside = std::abs(px - c.cx) <= half_w && std::abs(py - c.cy) <= half_h;
      out.at(0, 0, j, i) = inside ? 1.0 : 0.0;
    }
  }
  return out;
}

CenterBox decode_anchor(const GridGeometry& geom, int i, int j, const Vec4& offsets) {
  const auto [px, py] = geom.point(i, j);
  const CornerBox corners{px - offsets[0], py - offsets[1], px + offsets[2], py + offsets[3]};
  CenterBox c = corners.to_center();
  c.w = std::max(c.w, kMinAnchorSide);
  c.h = std::max(c.h, kMinAnchorSide);
  return c;
}

std::vector<CenterBox> decode_anchor_map(const GridGeometry& geom, const Tensor& offsets, int n) {
  const Shape s = offsets.shape();
  if (s.c != 4 || s.h != geom.h || s.w != geom.w || n < 0 || n >= s.n) {
    throw ShapeError("anchor map " + s.str() + " does not match a " + std::to_string(geom.w) + "x" +
                     std::to_string(geom.h) + " grid");
  }
  std::vector<CenterBox> anchors;
  anchors.reserve(geom.count());
  for (int j = 0; j < geom.h; ++j) {
    for (int i = 0; i < geom.w; ++i) {
      anchors.push_back(decode_anchor(
          geom, i, j, {offsets.at(n, 0, j, i), offsets.at(n, 1, j, i), offsets.at(n, 2, j, i), offsets.at(n, 3, j, i)}));
    }
  }
  return anchors;
}

Vec4 refine_targets(const CenterBox& anchor, const CenterBox& g) {
  if (!(g.w > 0.0) || !(g.h > 0.0)) {
    throw LabelError("ground truth needs positive width and height, got " + std::to_string(g.w) + "x" +
                     std::to_string(g.h));
  }
  return {(g.cx - anchor.cx) / anchor.w, (g.cy - anchor.cy) / anchor.h, std::log(g.w / anchor.w),
          std::log(g.h / anchor.h)};
}

CornerBox apply_refinement(const CenterBox& anchor, const Vec4& pred) {
  const CenterBox out{anchor.cx + pred[0] * anchor.w, anchor.cy + pred[1] * anchor.h,
                      anchor.w * std::exp(std::clamp(pred[2], -kMaxLogDelta, kMaxLogDelta)),
                      anchor.h * std::exp(std::clamp(pred[3], -kMaxLogDelta, kMaxLogDelta))};
  return out.to_corner();
}

double centerness(double px, double py, const CornerBox& g) {
  const Vec4 d = edge_distances(px, py, g);
  if (d[0] <= 0.0 || d[1] <= 0.0 || d[2] <= 0.0 || d[3] <= 0.0) return 0.0;
  const double lr = std::min(d[0], d[2]) / std::max(d[0], d[2]);
  const double tb = std::min(d[1], d[3]) / std::max(d[1], d[3]);
  return std::sqrt(lr * tb);
}

ClassificationLabels classification_labels(const GridGeometry& geom, std::span<const CenterBox> anchors,
                                           const CornerBox& g, double iou_pos, double iou_neg) {
  if (!(iou_neg < iou_pos)) throw ConfigError("classification labels need iou_neg < iou_pos");
  if (anchors.size() != static_cast<std::size_t>(geom.count())) {
    throw ShapeError("expected " + std::to_string(geom.count()) + " anchors, got " + std::to_string(anchors.size()));
  }
  ClassificationLabels out;
  out.cls1.resize(anchors.size());
  out.cls2.resize(anchors.size());
  out.cls3.resize(anchors.size());

  std::vector<double> overlaps(anchors.size());
  std::size_t best = 0;
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    overlaps[k] = iou(anchors[k].to_corner(), g);
    if (overlaps[k] > overlaps[best]) best = k;
  }
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    if (overlaps[k] >= iou_pos || k == best) {
      out.cls1[k] = Cls1Label::Positive;
    } else if (overlaps[k] <= iou_neg) {
      out.cls1[k] = Cls1Label::Negative;
    } else {
      out.cls1[k] = Cls1Label::Ignore;
    }
  }

  for (int j = 0; j < geom.h; ++j) {
    for (int i = 0; i < geom.w; ++i) {
      const auto [px, py] = geom.point(i, j);
      const std::size_t k = geom.index(i, j);
      out.cls2[k] = (px > g.x1 && px < g.x2 && py > g.y1 && py < g.y2) ? 1 : 0;
      out.cls3[k] = centerness(px, py, g);
    }
  }
  return out;
}

LabelBundle build_labels(const GridGeometry& geom, const CornerBox& g, std::vector<CenterBox> anchors,
                         const LabelConfig& cfg) {
  if (!(g.width() > 0.0) || !(g.height() > 0.0)) {
    throw LabelError("degenerate ground truth box (" + std::to_string(g.x1) + "," + std::to_string(g.y1) + "," +
                     std::to_string(g.x2) + "," + std::to_string(g.y2) + ")");
  }
  LabelBundle b;
  b.gt = g;
  b.apn_targets = apn_regression_labels(geom, g);
  b.quality_mask = quality_mask(geom, g, cfg.area_ratio);
  b.cls = classification_labels(geom, anchors, g, cfg.iou_pos, cfg.iou_neg);
  b.refine_targets = Tensor(Shape{1, 4, geom.h, geom.w});
  const CenterBox gc = g.to_center();
  for (int j = 0; j < geom.h; ++j) {
    for (int i = 0; i < geom.w; ++i) {
      const Vec4 r = refine_targets(anchors[geom.index(i, j)], gc);
      for (int k = 0; k < 4; ++k) b.refine_targets.at(0, k, j, i) = r[k];
    }
  }
  b.anchors = std::move(anchors);
  return b;
}

}  // namespace apn
