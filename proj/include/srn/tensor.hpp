#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace srn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the reverse-mode graph. Interior nodes carry a backward_fn that
// reads `grad` and accumulates into each parent that requires a gradient.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  std::vector<T>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Graph recording is on by default; this guard turns it off for the current
/// thread until destroyed (inference, optimizer updates).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Dense row-major array that participates in reverse-mode differentiation.
/// Copies are shallow: two Tensor handles may refer to the same node.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodeType = detail::Node<T>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  // In-place access for optimizers, initializers and perturbation checks.
  std::span<T> mutable_data() { return node_->value; }
  T item() const;
  T operator[](std::size_t flat) const { return node_->value[flat]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Reverse sweep from a scalar. Interior gradients are recomputed on every
  /// call; leaf gradients accumulate until zero_grad().
  void backward() const;

  /// Same values, no history, no gradient requirement.
  Tensor detach() const;
  /// Deep copy of values (and the requires_grad flag), no history.
  Tensor clone() const;

  /// Number of recorded operations this tensor depends on, itself included.
  std::size_t graph_size() const;

  const char* op_name() const { return node_->op; }
  const std::shared_ptr<NodeType>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<NodeType> node);

 private:
  std::shared_ptr<NodeType> node_;
};

}  // namespace srn
