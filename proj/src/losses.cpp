#include "apn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "apn/error.hpp"

namespace apn {
namespace {

constexpr double kProbEps = 1e-12;

Tensor scalar_tensor(double v) { return Tensor(Shape{1, 1, 1, 1}, v); }

LossTerm zero_term(const Var& like) {
  // Keeps the graph connected so backward() is still legal on the total.
  return {make_result(scalar_tensor(0.0), {like}, [](const Tensor&) {}), 0, true};
}

void check_points(const Var& v, std::size_t n, const char* what) {
  const std::size_t points = static_cast<std::size_t>(v.shape().n) * v.shape().plane();
  if (points != n) {
    throw ShapeError(std::string(what) + ": " + std::to_string(n) + " labels for map " + v.shape().str());
  }
}

double entropy(double t) {
  double h = 0.0;
  if (t > 0.0) h -= t * std::log(t);
  if (t < 1.0) h -= (1.0 - t) * std::log(1.0 - t);
  return h;
}

}  // namespace

LossTerm masked_l1_loss(const Var& pred, const Tensor& target, const Tensor& mask) {
  const Shape ps = pred.shape();
  if (target.shape() != ps || mask.shape() != Shape{ps.n, 1, ps.h, ps.w}) {
    throw ShapeError("masked_l1_loss: pred " + ps.str() + ", target " + target.shape().str() + ", mask " +
                     mask.shape().str());
  }
  std::size_t count = 0;
  double total = 0.0;
  for (int n = 0; n < ps.n; ++n) {
    const double* m = mask.plane(n, 0);
    for (std::size_t k = 0; k < ps.plane(); ++k) {
      if (m[k] == 0.0) continue;
      ++count;
      for (int c = 0; c < ps.c; ++c) total += std::abs(pred.value().plane(n, c)[k] - target.plane(n, c)[k]);
    }
  }
  if (count == 0) return zero_term(pred);
  const double inv = 1.0 / static_cast<double>(count);
  Var v = make_result(scalar_tensor(total * inv), {pred}, [pred, target, mask, inv](const Tensor& gy) {
    Tensor& d = pred.node()->ensure_grad();
    const Shape ps = pred.shape();
    const double g = gy[0] * inv;
    for (int n = 0; n < ps.n; ++n) {
      const double* m = mask.plane(n, 0);
      for (std::size_t k = 0; k < ps.plane(); ++k) {
        if (m[k] == 0.0) continue;
        for (int c = 0; c < ps.c; ++c) {
          const double diff = pred.value().plane(n, c)[k] - target.plane(n, c)[k];
          d.plane(n, c)[k] += g * static_cast<double>((diff > 0.0) - (diff < 0.0));
        }
      }
    }
  });
  return {v, count, false};
}

LossTerm softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  if (logits.shape().c != 2) throw ShapeError("softmax_cross_entropy: expects 2 channels, got " + logits.shape().str());
  check_points(logits, labels.size(), "softmax_cross_entropy");
  const Shape s = logits.shape();
  const std::size_t plane = s.plane();
  std::vector<int> lab(labels.begin(), labels.end());
  std::size_t count = 0;
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    const double* z0 = logits.value().plane(n, 0);
    const double* z1 = logits.value().plane(n, 1);
    for (std::size_t k = 0; k < plane; ++k) {
      const int y = lab[n * plane + k];
      if (y < 0) continue;
      ++count;
      const double hi = std::max(z0[k], z1[k]);
      const double lse = hi + std::log(std::exp(z0[k] - hi) + std::exp(z1[k] - hi));
      total += lse - (y == 1 ? z1[k] : z0[k]);
    }
  }
  if (count == 0) return zero_term(logits);
  const double inv = 1.0 / static_cast<double>(count);
  Var v = make_result(scalar_tensor(total * inv), {logits}, [logits, lab = std::move(lab), inv](const Tensor& gy) {
    Tensor& d = logits.node()->ensure_grad();
    const Shape s = logits.shape();
    const std::size_t plane = s.plane();
    const double g = gy[0] * inv;
    for (int n = 0; n < s.n; ++n) {
      const double* z0 = logits.value().plane(n, 0);
      const double* z1 = logits.value().plane(n, 1);
      for (std::size_t k = 0; k < plane; ++k) {
        const int y = lab[n * plane + k];
        if (y < 0) continue;
        const double p1 = 1.0 / (1.0 + std::exp(z0[k] - z1[k]));
        const double p0 = 1.0 - p1;
        d.plane(n, 0)[k] += g * (p0 - (y == 0 ? 1.0 : 0.0));
        d.plane(n, 1)[k] += g * (p1 - (y == 1 ? 1.0 : 0.0));
      }
    }
  });
  return {v, count, false};
}

LossTerm binary_cross_entropy(const Var& prob, std::span<const double> targets, std::span<const std::uint8_t> support) {
  if (prob.shape().c != 1) throw ShapeError("binary_cross_entropy: expects 1 channel, got " + prob.shape().str());
  check_points(prob, targets.size(), "binary_cross_entropy");
  check_points(prob, support.size(), "binary_cross_entropy");
  std::vector<double> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> sup(support.begin(), support.end());
  const Tensor& p = prob.value();
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (sup[k] == 0) continue;
    ++count;
    const double q = std::clamp(p[k], kProbEps, 1.0 - kProbEps);
    total += -(tgt[k] * std::log(q) + (1.0 - tgt[k]) * std::log(1.0 - q)) - entropy(tgt[k]);
  }
  if (count == 0) return zero_term(prob);
  const double inv = 1.0 / static_cast<double>(count);
  // Rounding can leave the entropy-offset mean slightly negative; NaN passes through.
  const double mean = total * inv < 0.0 ? 0.0 : total * inv;
  Var v = make_result(scalar_tensor(mean), {prob},
                      [prob, tgt = std::move(tgt), sup = std::move(sup), inv](const Tensor& gy) {
                        Tensor& d = prob.node()->ensure_grad();
                        const Tensor& p = prob.value();
                        const double g = gy[0] * inv;
                        for (std::size_t k = 0; k < p.size(); ++k) {
                          if (sup[k] == 0) continue;
                          const double q = std::clamp(p[k], kProbEps, 1.0 - kProbEps);
                          d[k] += g * (q - tgt[k]) / (q * (1.0 - q));
                        }
                      });
  return {v, count, false};
}

namespace {

struct IouPoint {
  double loss;
  Vec4 grad;  // d loss / d pred
};

IouPoint iou_point(const CenterBox& a, const Vec4& r, const CornerBox& g) {
  const double r2 = std::clamp(r[2], -kMaxLogDelta, kMaxLogDelta);
  const double r3 = std::clamp(r[3], -kMaxLogDelta, kMaxLogDelta);
  const double cx = a.cx + r[0] * a.w;
  const double cy = a.cy + r[1] * a.h;
  const double pw = a.w * std::exp(r2);
  const double ph = a.h * std::exp(r3);
  const double x1 = cx - pw / 2.0, x2 = cx + pw / 2.0;
  const double y1 = cy - ph / 2.0, y2 = cy + ph / 2.0;

  const double iw = std::min(x2, g.x2) - std::max(x1, g.x1);
  const double ih = std::min(y2, g.y2) - std::max(y1, g.y1);
  const bool overlap = iw > 0.0 && ih > 0.0;
  const double inter = overlap ? iw * ih : 0.0;
  const double uni = pw * ph + g.area() - inter;
  IouPoint out{1.0 - inter / uni, {0.0, 0.0, 0.0, 0.0}};

  const double dl_dinter = -(uni + inter) / (uni * uni);
  const double dl_darea = inter / (uni * uni);
  double di_dx1 = 0.0, di_dx2 = 0.0, di_dy1 = 0.0, di_dy2 = 0.0;
  if (overlap) {
    if (x1 > g.x1) di_dx1 = -ih;
    if (x2 < g.x2) di_dx2 = ih;
    if (y1 > g.y1) di_dy1 = -iw;
    if (y2 < g.y2) di_dy2 = iw;
  }
  const double dl_dcx = dl_dinter * (di_dx1 + di_dx2);
  const double dl_dcy = dl_dinter * (di_dy1 + di_dy2);
  const double dl_dpw = dl_dinter * 0.5 * (di_dx2 - di_dx1) + dl_darea * ph;
  const double dl_dph = dl_dinter * 0.5 * (di_dy2 - di_dy1) + dl_darea * pw;
  out.grad[0] = dl_dcx * a.w;
  out.grad[1] = dl_dcy * a.h;
  out.grad[2] = (r[2] > -kMaxLogDelta && r[2] < kMaxLogDelta) ? dl_dpw * pw : 0.0;
  out.grad[3] = (r[3] > -kMaxLogDelta && r[3] < kMaxLogDelta) ? dl_dph * ph : 0.0;
  return out;
}

}  // namespace

LossTerm iou_loss(const Var& pred, std::span<const CenterBox> anchors, std::span<const CornerBox> gts,
                  std::span<const std::uint8_t> support) {
  const Shape s = pred.shape();
  if (s.c != 4) throw ShapeError("iou_loss: expects 4 channels, got " + s.str());
  check_points(pred, anchors.size(), "iou_loss");
  check_points(pred, support.size(), "iou_loss");
  if (gts.size() != static_cast<std::size_t>(s.n)) throw ShapeError("iou_loss: one ground truth per batch entry");
  const std::size_t plane = s.plane();
  Tensor grad(s);
  std::size_t count = 0;
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t k = 0; k < plane; ++k) {
      const std::size_t idx = n * plane + k;
      if (support[idx] == 0) continue;
      ++count;
      const Vec4 r{pred.value().plane(n, 0)[k], pred.value().plane(n, 1)[k], pred.value().plane(n, 2)[k],
                   pred.value().plane(n, 3)[k]};
      const IouPoint ip = iou_point(anchors[idx], r, gts[n]);
      total += ip.loss;
      for (int c = 0; c < 4; ++c) grad.plane(n, c)[k] = ip.grad[c];
    }
  }
  if (count == 0) return zero_term(pred);
  const double inv = 1.0 / static_cast<double>(count);
  Var v = make_result(scalar_tensor(total * inv), {pred}, [pred, grad = std::move(grad), inv](const Tensor& gy) {
    Tensor& d = pred.node()->ensure_grad();
    const double g = gy[0] * inv;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * grad[i];
  });
  return {v, count, false};
}

LossTerm smooth_l1_loss(const Var& pred, const Tensor& target, std::span<const std::uint8_t> support, double beta) {
  const Shape s = pred.shape();
  if (target.shape() != s) throw ShapeError("smooth_l1_loss: pred " + s.str() + " target " + target.shape().str());
  check_points(pred, support.size(), "smooth_l1_loss");
  if (!(beta > 0.0)) throw ConfigError("smooth_l1_loss: transition point must be positive");
  std::vector<std::uint8_t> sup(support.begin(), support.end());
  const std::size_t plane = s.plane();
  std::size_t count = 0;
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t k = 0; k < plane; ++k) {
      if (sup[n * plane + k] == 0) continue;
      ++count;
      for (int c = 0; c < s.c; ++c) {
        const double d = std::abs(pred.value().plane(n, c)[k] - target.plane(n, c)[k]);
        total += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
      }
    }
  }
  if (count == 0) return zero_term(pred);
  const double inv = 1.0 / static_cast<double>(count);
  Var v = make_result(scalar_tensor(total * inv), {pred},
                      [pred, target, sup = std::move(sup), inv, beta](const Tensor& gy) {
                        Tensor& dp = pred.node()->ensure_grad();
                        const Shape s = pred.shape();
                        const std::size_t plane = s.plane();
                        const double g = gy[0] * inv;
                        for (int n = 0; n < s.n; ++n) {
                          for (std::size_t k = 0; k < plane; ++k) {
                            if (sup[n * plane + k] == 0) continue;
                            for (int c = 0; c < s.c; ++c) {
                              const double d = pred.value().plane(n, c)[k] - target.plane(n, c)[k];
                              const double gd = std::abs(d) < beta ? d / beta : static_cast<double>((d > 0) - (d < 0));
                              dp.plane(n, c)[k] += g * gd;
                            }
                          }
                        }
                      });
  return {v, count, false};
}

Var weighted_sum(const std::vector<std::pair<double, Var>>& terms) {
  if (terms.empty()) throw UsageError("weighted_sum of no terms");
  Var acc = scale(terms.front().second, terms.front().first);
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, scale(terms[i].second, terms[i].first));
  return acc;
}

namespace {

// Stacks per-sample (1, c, h, w) label tensors into (N, c, h, w).
Tensor stack(std::span<const LabelBundle> labels, Tensor LabelBundle::*field) {
  const Shape one = (labels.front().*field).shape();
  Tensor out(Shape{static_cast<int>(labels.size()), one.c, one.h, one.w});
  const std::size_t len = one.numel();
  for (std::size_t n = 0; n < labels.size(); ++n) {
    std::copy_n((labels[n].*field).raw(), len, out.raw() + n * len);
  }
  return out;
}

void check_batch(const Var& v, std::span<const LabelBundle> labels, const char* what) {
  if (labels.empty() || static_cast<std::size_t>(v.shape().n) != labels.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(labels.size()) + " label bundles for batch " +
                     v.shape().str());
  }
}

}  // namespace

LossTerm apn_loss(const Var& anchors, std::span<const LabelBundle> labels) {
  check_batch(anchors, labels, "apn_loss");
  return masked_l1_loss(anchors, stack(labels, &LabelBundle::apn_targets), stack(labels, &LabelBundle::quality_mask));
}

ClassificationLoss classification_loss(const Var& cls1, const Var& cls2, const Var& cls3,
                                       std::span<const LabelBundle> labels, const LossWeights& w) {
  check_batch(cls1, labels, "classification_loss");
  std::vector<int> l1, l2;
  std::vector<double> t3;
  std::vector<std::uint8_t> s3;
  for (const auto& b : labels) {
    for (Cls1Label c : b.cls.cls1) l1.push_back(static_cast<int>(c));
    for (std::uint8_t c : b.cls.cls2) {
      l2.push_back(c);
      s3.push_back(c);
    }
    t3.insert(t3.end(), b.cls.cls3.begin(), b.cls.cls3.end());
  }
  ClassificationLoss out;
  out.cls1 = softmax_cross_entropy(cls1, l1);
  out.cls2 = softmax_cross_entropy(cls2, l2);
  out.cls3 = binary_cross_entropy(cls3, t3, s3);
  out.total = weighted_sum({{w.cls1, out.cls1.value}, {w.cls2, out.cls2.value}, {w.cls3, out.cls3.value}});
  return out;
}

RegressionLoss regression_loss(const Var& loc, std::span<const LabelBundle> labels, const LossWeights& w) {
  check_batch(loc, labels, "regression_loss");
  std::vector<CenterBox> anchors;
  std::vector<CornerBox> gts;
  std::vector<std::uint8_t> support;
  for (const auto& b : labels) {
    anchors.insert(anchors.end(), b.anchors.begin(), b.anchors.end());
    gts.push_back(b.gt);
    for (Cls1Label c : b.cls.cls1) support.push_back(c == Cls1Label::Positive ? 1 : 0);
  }
  RegressionLoss out;
  out.iou = iou_loss(loc, anchors, gts, support);
  out.smooth_l1 = smooth_l1_loss(loc, stack(labels, &LabelBundle::refine_targets), support, w.smooth_l1_beta);
  out.total = weighted_sum({{w.loc1, out.iou.value}, {w.loc2, out.smooth_l1.value}});
  return out;
}

LossBreakdown total_loss(const NetworkOutputs& out, std::span<const LabelBundle> labels, const LossWeights& w) {
  const LossTerm apn = apn_loss(out.anchors, labels);
  const ClassificationLoss cls = classification_loss(out.cls1, out.cls2, out.cls3, labels, w);
  const RegressionLoss loc = regression_loss(out.loc, labels, w);

  LossBreakdown b;
  b.apn = apn.scalar();
  b.cls = cls.total.value()[0];
  b.loc = loc.total.value()[0];
  b.cls1 = cls.cls1.scalar();
  b.cls2 = cls.cls2.scalar();
  b.cls3 = cls.cls3.scalar();
  b.loc_iou = loc.iou.scalar();
  b.loc_l1 = loc.smooth_l1.scalar();
  b.degenerate = apn.degenerate || cls.cls1.degenerate || loc.iou.degenerate;
  for (const auto& [name, v] : {std::pair{"apn", b.apn}, {"cls", b.cls}, {"loc", b.loc}}) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + name + " loss");
  }
  b.total = weighted_sum({{1.0, apn.value}, {w.lambda1, cls.total}, {w.lambda2, loc.total}});
  return b;
}

}  // namespace apn
