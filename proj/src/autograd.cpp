// SPDX-License-Identifier: Apache-2.0
#include "art/autograd.hpp"

#include <sstream>

namespace art {

std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ')';
  return os.str();
}

namespace {
template <class Real>
Graph<Real>*& active_slot() {
  thread_local Graph<Real>* graph = nullptr;
  return graph;
}
}  // namespace

template <class Real>
Graph<Real>* active_graph() {
  return active_slot<Real>();
}

template <class Real>
GraphScope<Real>::GraphScope(Graph<Real>& graph) : previous_(active_slot<Real>()) {
  active_slot<Real>() = &graph;
}

template <class Real>
GraphScope<Real>::~GraphScope() {
  active_slot<Real>() = previous_;
}

template <class Real>
void Graph<Real>::backward(const Var<Real>& loss) {
  if (!loss.valid() || loss.size() != 1)
    throw ContractError("backward() needs a scalar loss, got dims " +
                        (loss.valid() ? shape_str(loss.dims()) : std::string("<null>")));
  if (!loss.requires_grad()) throw ContractError("backward() on a loss that does not require grad");
  Node<Real>& root = loss.node();
  root.grad_buffer()[0] += Real(1);
  if (!root.backward) return;  // loss is itself a leaf
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<Real>& n = **it;
    if (!n.backward || !n.has_grad()) continue;
    if (corruption_ && corruption_->op == n.op)
      for (auto& g : n.grad.data()) g = static_cast<Real>(g * corruption_->factor);
    n.backward(n);
  }
}

namespace {

template <class Real>
Var<Real> finish(Tensor<Real> value, const char* op, bool needs_grad,
                 std::function<void(Node<Real>&)> backward) {
  if (!value.all_finite())
    throw DegenerateInputError(std::string("non-finite value produced by op '") + op + "'");
  Graph<Real>* graph = active_graph<Real>();
  auto node = std::make_shared<Node<Real>>();
  node->value = std::move(value);
  node->op = op;
  if (needs_grad && graph) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    graph->record(node);
  }
  return Var<Real>(std::move(node));
}

}  // namespace

template <class Real>
Var<Real> make_result(Tensor<Real> value, const char* op, std::initializer_list<const Var<Real>*> inputs,
                      std::function<void(Node<Real>&)> backward) {
  bool needs = false;
  for (const Var<Real>* v : inputs) needs = needs || (v->valid() && v->requires_grad());
  return finish(std::move(value), op, needs, std::move(backward));
}

template <class Real>
Var<Real> make_result(Tensor<Real> value, const char* op, const std::vector<Var<Real>>& inputs,
                      std::function<void(Node<Real>&)> backward) {
  bool needs = false;
  for (const Var<Real>& v : inputs) needs = needs || (v.valid() && v.requires_grad());
  return finish(std::move(value), op, needs, std::move(backward));
}

#define ART_INSTANTIATE(Real)                                                                  \
  template class Graph<Real>;                                                                  \
  template class GraphScope<Real>;                                                             \
  template Graph<Real>* active_graph<Real>();                                                  \
  template Var<Real> make_result<Real>(Tensor<Real>, const char*,                              \
                                       std::initializer_list<const Var<Real>*>,                \
                                       std::function<void(Node<Real>&)>);                      \
  template Var<Real> make_result<Real>(Tensor<Real>, const char*, const std::vector<Var<Real>>&, \
                                       std::function<void(Node<Real>&)>);

ART_INSTANTIATE(float)
ART_INSTANTIATE(double)
#undef ART_INSTANTIATE

}  // namespace art
