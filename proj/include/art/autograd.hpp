// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode differentiation over a recorded tape.
//
// Ops record a node on the thread's active Graph (see GraphScope) when at
// least one input requires a gradient. Without an active graph, ops evaluate
// eagerly and return constants, which is the inference path. Leaves created
// with Var::leaf live outside any graph; their gradients accumulate until the
// caller zeroes them.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "art/tensor.hpp"

namespace art {

template <class Real>
struct Node {
  Tensor<Real> value;
  Tensor<Real> grad;  // empty until something flows into it
  bool requires_grad = false;
  const char* op = "leaf";
  std::function<void(Node&)> backward;

  bool has_grad() const { return grad.size() == value.size() && !grad.empty(); }
  Tensor<Real>& grad_buffer() {
    if (!has_grad()) grad = Tensor<Real>(value.dims());
    return grad;
  }
};

template <class Real>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<Real>> node) : node_(std::move(node)) {}

  static Var leaf(Tensor<Real> value, bool requires_grad = true) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }
  static Var constant(Tensor<Real> value) { return leaf(std::move(value), false); }

  bool valid() const { return static_cast<bool>(node_); }
  const Tensor<Real>& value() const { return node_->value; }
  const Shape& dims() const { return node_->value.dims(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t size() const { return node_->value.size(); }
  Real item() const { return node_->value.item(); }
  bool requires_grad() const { return node_->requires_grad; }

  bool has_grad() const { return node_->has_grad(); }
  // Gradient accumulated so far; zeros if nothing reached this node.
  Tensor<Real> grad() const {
    return node_->has_grad() ? node_->grad : Tensor<Real>(node_->value.dims());
  }
  void zero_grad() { node_->grad = Tensor<Real>(); }

  Node<Real>& node() const { return *node_; }
  const std::shared_ptr<Node<Real>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<Real>> node_;
};

// Test hook: scales the gradient leaving nodes of a named op. Used to prove
// that the finite-difference suite catches a broken backward.
struct GradientCorruption {
  std::string op;
  double factor = 2.0;
};

template <class Real>
class Graph {
 public:
  void record(std::shared_ptr<Node<Real>> node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse append order.
  void backward(const Var<Real>& loss);

  void set_corruption(std::optional<GradientCorruption> c) { corruption_ = std::move(c); }

 private:
  std::vector<std::shared_ptr<Node<Real>>> nodes_;
  std::optional<GradientCorruption> corruption_;
};

template <class Real>
Graph<Real>* active_graph();

// Makes `graph` the recording target for ops on this thread.
template <class Real>
class GraphScope {
 public:
  explicit GraphScope(Graph<Real>& graph);
  ~GraphScope();
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

 private:
  Graph<Real>* previous_;
};

// Builds the output of an op. Records a tape node iff an input requires grad
// and a graph is active; otherwise returns a constant. Throws
// DegenerateInputError when the value is not finite.
template <class Real>
Var<Real> make_result(Tensor<Real> value, const char* op, std::initializer_list<const Var<Real>*> inputs,
                      std::function<void(Node<Real>&)> backward);

template <class Real>
Var<Real> make_result(Tensor<Real> value, const char* op, const std::vector<Var<Real>>& inputs,
                      std::function<void(Node<Real>&)> backward);

}  // namespace art
