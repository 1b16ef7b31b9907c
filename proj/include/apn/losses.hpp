#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "apn/autograd.hpp"
#include "apn/geometry.hpp"
#include "apn/network.hpp"

namespace apn {

struct LossWeights {
  double cls1 = 1.2;
  double cls2 = 1.0;
  double cls3 = 1.0;
  double loc1 = 1.0;  // IoU term
  double loc2 = 1.0;  // smooth-L1 term
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double smooth_l1_beta = 1.0;
};

// A scalar loss plus the number of points it was averaged over. An empty
// support yields a zero-valued term flagged degenerate.
struct LossTerm {
  Var value;
  std::size_t support = 0;
  bool degenerate = false;
  double scalar() const { return value.value()[0]; }
};

// Sum over the four offsets of |pred - target|, averaged over points where
// mask == 1. pred, target: (N, 4, h, w); mask: (N, 1, h, w).
LossTerm masked_l1_loss(const Var& pred, const Tensor& target, const Tensor& mask);

// Two-class softmax cross-entropy averaged over points whose label is 0 or 1;
// label -1 excludes a point. labels are ordered (n, y, x).
LossTerm softmax_cross_entropy(const Var& logits, std::span<const int> labels);

// Binary cross-entropy of probabilities against soft targets, minus the target
// entropy so a perfect prediction scores 0 (the gradient is unchanged).
// Averaged over points with support != 0.
LossTerm binary_cross_entropy(const Var& prob, std::span<const double> targets, std::span<const std::uint8_t> support);

// Mean of 1 - IoU(apply_refinement(anchor, pred), gt) over supported points.
// anchors are ordered (n, y, x); gts holds one box per batch entry.
LossTerm iou_loss(const Var& pred, std::span<const CenterBox> anchors, std::span<const CornerBox> gts,
                  std::span<const std::uint8_t> support);

// Smooth-L1 summed over the 4 components, averaged over supported points.
LossTerm smooth_l1_loss(const Var& pred, const Tensor& target, std::span<const std::uint8_t> support, double beta);

// Batch-level losses built from per-sample label bundles.
LossTerm apn_loss(const Var& anchors, std::span<const LabelBundle> labels);

struct ClassificationLoss {
  Var total;
  LossTerm cls1, cls2, cls3;
};
ClassificationLoss classification_loss(const Var& cls1, const Var& cls2, const Var& cls3,
                                       std::span<const LabelBundle> labels, const LossWeights& w);

struct RegressionLoss {
  Var total;
  LossTerm iou, smooth_l1;
};
// Evaluated on cls1-positive points; anchors are constants.
RegressionLoss regression_loss(const Var& loc, std::span<const LabelBundle> labels, const LossWeights& w);

struct LossBreakdown {
  Var total;
  double apn = 0.0;
  double cls = 0.0;
  double loc = 0.0;
  double cls1 = 0.0;
  double cls2 = 0.0;
  double cls3 = 0.0;
  double loc_iou = 0.0;
  double loc_l1 = 0.0;
  bool degenerate = false;
  double scalar() const { return total.value()[0]; }
};

// apn + lambda1 * cls + lambda2 * loc. Throws NumericError naming the first
// non-finite component.
LossBreakdown total_loss(const NetworkOutputs& out, std::span<const LabelBundle> labels, const LossWeights& w);

// sum_k weight_k * term_k for scalar terms.
Var weighted_sum(const std::vector<std::pair<double, Var>>& terms);

}  // namespace apn
