#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "apn/tensor.hpp"

namespace apn {

namespace detail {
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first use
  bool requires_grad = false;
  bool leaf = true;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad, accumulates into parents that require grad.
  std::function<void(const Tensor&)> backward_fn;

  Tensor& ensure_grad();
};
}  // namespace detail

// Handle to a value in the reverse-mode graph. Copies share the node, so a
// parameter Var held by two layers is one parameter.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  static Var parameter(Tensor value, std::string name);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  // Zero-filled when nothing has been accumulated yet.
  const Tensor& grad() const { return node_->ensure_grad(); }
  Tensor& mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return node_->leaf; }
  const std::string& name() const { return node_->name; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  bool same_node(const Var& other) const { return node_ == other.node_; }

 private:
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Var make_result(Tensor, const std::vector<Var>&, std::function<void(const Tensor&)>);

  std::shared_ptr<detail::Node> node_;
};

// Builds an interior node. The backward closure is dropped when no input
// requires grad, so inference builds no graph.
Var make_result(Tensor value, const std::vector<Var>& inputs, std::function<void(const Tensor&)> backward_fn);

// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
// Interior gradients are reset on each call; leaf gradients accumulate.
// Throws UsageError when root is not a single element.
void backward(const Var& root);

// Adds g into v's gradient when v takes part in differentiation.
void accumulate_grad(const Var& v, const Tensor& g);

}  // namespace apn
