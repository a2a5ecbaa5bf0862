// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace winbev {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// Monotone creation stamp. Reverse-mode replays nodes in decreasing stamp order,
// which is the order a tape would record them.
std::uint64_t next_stamp();

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::uint64_t stamp = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const std::vector<T>&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor with optional reverse-mode gradient tracking.
///
/// A tensor is a cheap handle onto a shared node; copies alias the same storage.
/// Values are immutable once an op has produced them. Leaves created with
/// `parameter()` accumulate gradients across `backward()` calls until
/// `zero_grad()` is called.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;
  using Backward = std::function<void(const std::vector<T>&)>;

  BasicTensor() = default;

  static BasicTensor constant(Shape shape, std::vector<T> values);
  static BasicTensor zeros(Shape shape);
  static BasicTensor full(Shape shape, T value);
  static BasicTensor scalar(T value);
  static BasicTensor parameter(Shape shape, std::vector<T> values);

  // Builds an op result. `backward` receives d(loss)/d(result) and is only kept
  // when at least one input tracks gradients.
  static BasicTensor from_op(Shape shape, std::vector<T> values,
                             std::initializer_list<const BasicTensor*> inputs, Backward backward);
  static BasicTensor from_op(Shape shape, std::vector<T> values,
                             const std::vector<BasicTensor>& inputs, Backward backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> values() const;
  // Direct write access; meant for optimizers and initialisers acting on leaves.
  std::span<T> mutable_values();
  std::span<const T> grad() const;
  bool has_grad() const;
  bool requires_grad() const;

  T item() const;
  T operator[](std::size_t flat_index) const;

  void backward() const;
  void zero_grad();
  BasicTensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

using Tensor = BasicTensor<float>;
using DTensor = BasicTensor<double>;

// Accumulates into an input's gradient, allocating it on first use.
template <typename T>
inline std::vector<T>* grad_sink(const std::shared_ptr<detail::Node<T>>& node) {
  if (!node || !node->requires_grad) return nullptr;
  return &node->grad_buffer();
}

}  // namespace winbev
