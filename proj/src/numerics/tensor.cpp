// SPDX-License-Identifier: Apache-2.0
#include "winbev/numerics/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

#include "winbev/errors.hpp"

namespace winbev {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {
std::uint64_t next_stamp() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}
}  // namespace detail

namespace {
template <typename T>
std::shared_ptr<detail::Node<T>> make_node(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  node->stamp = detail::next_stamp();
  return node;
}
}  // namespace

template <typename T>
BasicTensor<T> BasicTensor<T>::constant(Shape shape, std::vector<T> values) {
  return BasicTensor(make_node(std::move(shape), std::move(values), false));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape) {
  auto n = shape_numel(shape);
  return constant(std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value) {
  auto n = shape_numel(shape);
  return constant(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
  return constant({1}, {value});
}

template <typename T>
BasicTensor<T> BasicTensor<T>::parameter(Shape shape, std::vector<T> values) {
  return BasicTensor(make_node(std::move(shape), std::move(values), true));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_op(Shape shape, std::vector<T> values,
                                       std::initializer_list<const BasicTensor*> inputs,
                                       Backward backward) {
  bool tracked = false;
  for (const auto* in : inputs) tracked = tracked || (in->defined() && in->requires_grad());
  auto node = make_node(std::move(shape), std::move(values), tracked);
  if (tracked) {
    for (const auto* in : inputs) {
      if (in->defined() && in->requires_grad()) node->parents.push_back(in->node());
    }
    node->backward = std::move(backward);
  }
  return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_op(Shape shape, std::vector<T> values,
                                       const std::vector<BasicTensor>& inputs, Backward backward) {
  bool tracked = false;
  for (const auto& in : inputs) tracked = tracked || (in.defined() && in.requires_grad());
  auto node = make_node(std::move(shape), std::move(values), tracked);
  if (tracked) {
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) node->parents.push_back(in.node());
    }
    node->backward = std::move(backward);
  }
  return BasicTensor(std::move(node));
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
  static const Shape empty;
  return node_ ? node_->shape : empty;
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

template <typename T>
std::size_t BasicTensor<T>::numel() const {
  return node_ ? node_->data.size() : 0;
}

template <typename T>
std::span<const T> BasicTensor<T>::values() const {
  if (!node_) return {};
  return {node_->data.data(), node_->data.size()};
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_values() {
  if (!node_) return {};
  return {node_->data.data(), node_->data.size()};
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!node_ || node_->grad.empty()) return {};
  return {node_->grad.data(), node_->grad.size()};
}

template <typename T>
bool BasicTensor<T>::has_grad() const {
  return node_ && !node_->grad.empty();
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
T BasicTensor<T>::operator[](std::size_t flat_index) const {
  return node_->data.at(flat_index);
}

template <typename T>
void BasicTensor<T>::backward() const {
  if (numel() != 1) throw DimensionError("backward() needs a scalar, got " + shape_str(shape()));
  if (!requires_grad()) return;

  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> seen;
  std::vector<detail::Node<T>*> stack{node_.get()};
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->stamp > b->stamp; });

  node_->grad_buffer()[0] += T(1);
  for (auto* n : order) {
    if (n->backward && !n->grad.empty()) n->backward(n->grad);
  }
  // Interior gradients are scratch space; only leaves keep theirs.
  for (auto* n : order) {
    if (n->backward) std::vector<T>().swap(n->grad);
  }
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return constant(shape(), node_ ? node_->data : std::vector<T>{});
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace winbev
