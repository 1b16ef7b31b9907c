#include "apn/optim.hpp"

#include <cmath>
#include <sstream>

#include "apn/error.hpp"

namespace apn {

void zero_grads(std::vector<NamedParameter>& params) {
  for (auto& p : params) p.var.zero_grad();
}

Sgd::Sgd(double momentum, double max_grad_norm) : momentum_(momentum), max_norm_(max_grad_norm) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("sgd: momentum must lie in [0, 1), got " + std::to_string(momentum));
  }
  if (!(max_grad_norm >= 0.0)) throw ConfigError("sgd: max_grad_norm must be >= 0");
}

void Sgd::step(std::vector<NamedParameter>& params, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("sgd: learning rate must be positive");
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.var.requires_grad()) continue;
    const Tensor& g = p.var.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      sq += g[i] * g[i];
      if (!std::isfinite(g[i])) {
        std::ostringstream os;
        os << "sgd: non-finite gradient in '" << p.name << "' at flat index " << i << " (value " << g[i] << ")";
        throw NumericError(os.str());
      }
    }
  }
  last_norm_ = std::sqrt(sq);
  const double k = (max_norm_ > 0.0 && last_norm_ > max_norm_) ? max_norm_ / last_norm_ : 1.0;
  for (auto& p : params) {
    if (!p.var.requires_grad()) continue;
    const Tensor& g = p.var.grad();
    auto& v = velocity_[p.name];
    if (v.size() != g.size()) v.assign(g.size(), 0.0);
    Tensor& w = p.var.mutable_value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      v[i] = momentum_ * v[i] + k * g[i];
      w[i] -= lr * v[i];
    }
  }
}

}  // namespace apn
