// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/num/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace zebra::num {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + to_string(shape));
    n *= e;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
  node_->value.assign(static_cast<std::size_t>(num::numel(shape)), T(0));
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
  if (num::numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("shape " + to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T fill, bool requires_grad) {
  const auto n = static_cast<std::size_t>(num::numel(shape));
  return BasicTensor(std::move(shape), std::vector<T>(n, fill), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T v, bool requires_grad) {
  return BasicTensor(Shape{}, std::vector<T>{v}, requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::make_result(Shape shape, std::vector<T> values,
                                           const std::vector<BasicTensor>& inputs,
                                           const char* op, BackwardFn backward) {
  BasicTensor out(std::move(shape), std::move(values));
  out.node_->op = op;
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->is_leaf = false;
  out.node_->inputs.reserve(inputs.size());
  for (const auto& in : inputs) out.node_->inputs.push_back(in.node_);
  out.node_->backward = std::move(backward);
  return out;
}

template <typename T>
std::int64_t BasicTensor<T>::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(shape()));
  }
  return node_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool on) {
  if (!node_->is_leaf) throw GraphError("requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!has_grad()) throw GraphError("tensor has no gradient");
  return node_->grad;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() {
  return {node_->grad_buffer(), node_->value.size()};
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(node_->shape, node_->value, false);
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
  if (!loss.defined()) throw GraphError("backward on undefined tensor");
  const auto& root = loss.node();
  if (root->consumed) throw GraphError("backward called twice on the same graph");
  if (loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!root->requires_grad) throw GraphError("loss does not depend on any tensor requiring grad");

  // Iterative post-order DFS; `order` ends up topologically sorted and keeps
  // every interior node alive until the sweep finishes.
  using Ptr = std::shared_ptr<Node<T>>;
  std::vector<Ptr> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Ptr, std::size_t>> stack{{root, 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Ptr child = node->inputs[next++];
      if (child->requires_grad && !child->is_leaf && seen.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  root->grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = it->get();
    if (node->backward && !node->grad.empty()) node->backward(*node);
    node->inputs.clear();
    node->backward = nullptr;
    node->grad.clear();
    node->grad.shrink_to_fit();
    node->consumed = true;
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);

}  // namespace zebra::num
