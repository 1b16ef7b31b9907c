#pragma once

#include <map>
#include <string>
#include <vector>

#include "apn/autograd.hpp"

namespace apn {

struct NamedParameter {
  std::string name;
  std::string group;  // subnetwork: backbone, apn, fusion, heads
  Var var;
};

void zero_grads(std::vector<NamedParameter>& params);

// SGD with heavy-ball momentum: v <- momentum * v + grad; param <- param - lr * v.
// Parameters with requires_grad == false are skipped (and keep their velocity).
// With max_grad_norm > 0 the gradients of the trainable parameters are scaled
// down together whenever their global L2 norm exceeds it.
class Sgd {
 public:
  explicit Sgd(double momentum, double max_grad_norm = 0.0);

  // Throws NumericError naming the parameter when a gradient is not finite;
  // no parameter is modified in that case.
  void step(std::vector<NamedParameter>& params, double lr);

  double momentum() const { return momentum_; }
  // Global gradient norm seen by the last step, before clipping.
  double last_grad_norm() const { return last_norm_; }

 private:
  double momentum_;
  double max_norm_;
  double last_norm_ = 0.0;
  std::map<std::string, std::vector<double>> velocity_;
};

}  // namespace apn
