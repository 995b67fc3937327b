#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "headkd/tensor.hpp"

namespace headkd {

// Tape node. Interior nodes keep their parents alive; parents never point back
// to children, so a graph is released as soon as its output Var goes away.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Allocates a zero gradient on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var parameter(Tensor value) { return Var(std::move(value), true); }
  static Var constant(Tensor value) { return Var(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  // Direct access for optimizers and structural edits of leaf parameters.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  const std::shared_ptr<Node>& node() const { return node_; }

  // Builds an interior node. When gradients are disabled, or no parent needs
  // one, the result is a plain constant and `backward_fn` is dropped.
  static Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Reverse sweep from a scalar loss. Gradients accumulate into every reachable
// node that requires one; call zero_grad() on parameters between steps.
void backward(const Var& loss);

}  // namespace headkd
