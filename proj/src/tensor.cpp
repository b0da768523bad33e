#include "srn/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

#include "srn/errors.hpp"

namespace srn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<NodeType>()) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape()));
  }
  return node_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<NodeType> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(node_->shape, node_->value, node_->requires_grad);
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents before consumers).
  std::vector<NodeType*> order;
  std::unordered_set<NodeType*> visited;
  std::vector<std::pair<NodeType*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeType* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeType* n : order) {
    if (n->backward_fn) n->grad.assign(n->value.size(), T(0));
  }
  node_->grad_buffer()[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeType* n = *it;
    if (!n->backward_fn) continue;
    n->backward_fn(*n);
    std::vector<T>().swap(n->grad);
  }
}

template <typename T>
std::size_t Tensor<T>::graph_size() const {
  std::unordered_set<const NodeType*> seen;
  std::vector<const NodeType*> stack{node_.get()};
  std::size_t ops = 0;
  while (!stack.empty()) {
    const NodeType* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    if (n->backward_fn) ++ops;
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  return ops;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace srn
