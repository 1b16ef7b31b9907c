#include "apn/autograd.hpp"

#include <unordered_set>
#include <utility>

#include "apn/error.hpp"

namespace apn {

Tensor& detail::Node::ensure_grad() {
  if (grad.shape() != value.shape() || grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value, std::string name) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->name = std::move(name);
  return Var(std::move(node));
}

void Var::zero_grad() {
  if (!node_->grad.empty()) node_->grad.fill(0.0);
}

void Var::set_requires_grad(bool on) {
  if (!node_->leaf) throw UsageError("requires_grad can only be toggled on leaves");
  node_->requires_grad = on;
}

Var make_result(Tensor value, const std::vector<Var>& inputs, std::function<void(const Tensor&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->leaf = false;
  for (const Var& in : inputs) {
    if (in.defined() && in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const Var& in : inputs) {
      if (in.defined() && in.requires_grad()) node->parents.push_back(in.node());
    }
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void accumulate_grad(const Var& v, const Tensor& g) {
  if (!v.defined() || !v.requires_grad()) return;
  Tensor& dst = v.node()->ensure_grad();
  double* d = dst.raw();
  const double* s = g.raw();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

void backward(const Var& root) {
  if (!root.defined() || root.value().size() != 1) {
    throw UsageError("backward() needs a scalar root, got shape " +
                     (root.defined() ? root.shape().str() : std::string("<undefined>")));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* node : order) {
    if (!node->leaf) node->ensure_grad().fill(0.0);
  }
  root.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->leaf && node->backward_fn) node->backward_fn(node->grad);
  }

#ifndef NDEBUG
  for (detail::Node* node : order) {
    if (node->leaf && node->requires_grad && !node->ensure_grad().all_finite()) {
      throw NumericError("non-finite gradient in '" + node->name + "' after backward");
    }
  }
#endif
}

}  // namespace apn
