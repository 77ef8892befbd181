#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "spikereg/error.hpp"

namespace spikereg {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

namespace detail {

inline thread_local bool grad_mode_enabled = true;

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_enabled; }

/// Disables graph recording for its lifetime (evaluation, initialization).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
  ~NoGradGuard() { detail::grad_mode_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// One vertex of the reverse-mode tape. Interior nodes own their inputs and a
/// backward rule that reads `grad` and accumulates into the inputs' grads.
template <typename Scalar>
struct Node {
  Shape shape;
  Buffer<Scalar> value;
  Buffer<Scalar> grad;  // empty until the first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }

  Buffer<Scalar>& grad_buffer() {
    if (grad.size() != value.size()) grad = Buffer<Scalar>::Zero(value.size());
    return grad;
  }
};

/// Shared handle to a node: copies alias the same values and gradient.
template <typename Scalar>
class Tensor {
 public:
  using NodeType = Node<Scalar>;

  Tensor() = default;

  Tensor(Shape shape, Buffer<Scalar> values, bool requires_grad = false)
      : node_(std::make_shared<NodeType>()) {
    for (Index extent : shape) {
      if (extent <= 0) {
        throw ConfigurationError("tensor extents must be positive, got " + shape_string(shape));
      }
    }
    if (spikereg::numel(shape) != values.size()) {
      throw ConfigurationError("shape " + shape_string(shape) + " holds " +
                               std::to_string(spikereg::numel(shape)) + " values, got " +
                               std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values, bool requires_grad = false)
      : Tensor(std::move(shape), to_buffer(values), requires_grad) {}

  explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false) {
    return full(shape, Scalar(0), requires_grad);
  }
  static Tensor ones(const Shape& shape, bool requires_grad = false) {
    return full(shape, Scalar(1), requires_grad);
  }
  static Tensor full(const Shape& shape, Scalar value, bool requires_grad = false) {
    return Tensor(shape, Buffer<Scalar>::Constant(spikereg::numel(shape), value), requires_grad);
  }
  static Tensor scalar(Scalar value, bool requires_grad = false) {
    return full({1}, value, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Index dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  Index numel() const { return node_->value.size(); }

  const Buffer<Scalar>& values() const { return node_->value; }
  // In-place access for optimizers and initializers; never use on graph interiors.
  Buffer<Scalar>& mutable_values() const { return node_->value; }
  Scalar item() const {
    if (numel() != 1) throw UsageError("item() requires a single-element tensor, got " + shape_string(shape()));
    return node_->value[0];
  }
  Scalar operator[](Index i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) const { node_->requires_grad = flag; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && node_->value.size() > 0; }
  const Buffer<Scalar>& grad() const { return node_->grad; }
  Buffer<Scalar>& mutable_grad() const { return node_->grad_buffer(); }
  void zero_grad() const { node_->grad.resize(0); }

  const char* op() const { return node_->op; }
  const std::shared_ptr<NodeType>& node() const { return node_; }

  /// Same values, cut from the tape.
  Tensor detach() const { return Tensor(node_->shape, node_->value, false); }

  Tensor clone() const { return Tensor(node_->shape, node_->value, node_->requires_grad); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  static Buffer<Scalar> to_buffer(std::initializer_list<Scalar> values) {
    Buffer<Scalar> out(static_cast<Index>(values.size()));
    std::copy(values.begin(), values.end(), out.data());
    return out;
  }

  std::shared_ptr<NodeType> node_;
};

/// Creates the output node of an op. The backward rule and inputs are only
/// recorded when grad mode is on and some input requires a gradient.
template <typename Scalar>
Tensor<Scalar> make_result(const char* op, Shape shape, Buffer<Scalar> values,
                           std::vector<std::shared_ptr<Node<Scalar>>> inputs,
                           std::function<void(Node<Scalar>&)> backward) {
#ifdef SPIKEREG_CHECK_FINITE
  if (!values.isFinite().all() &&
      std::all_of(inputs.begin(), inputs.end(), [](const auto& n) { return !n || n->value.isFinite().all(); })) {
    throw NumericalError(std::string(op) + ": non-finite output from finite inputs");
  }
#endif
  Tensor<Scalar> out(std::move(shape), std::move(values), false);
  const bool track = grad_enabled() &&
                     std::any_of(inputs.begin(), inputs.end(),
                                 [](const auto& n) { return n && n->requires_grad; });
  if (track) {
    auto& node = *out.node();
    node.requires_grad = true;
    node.op = op;
    node.inputs = std::move(inputs);
    node.backward = std::move(backward);
  }
  return out;
}

template <typename Scalar>
void accumulate_grad(const std::shared_ptr<Node<Scalar>>& node, const Buffer<Scalar>& delta) {
  if (node && node->requires_grad) node->grad_buffer() += delta;
}

/// Reverse sweep from a scalar root. Gradients accumulate additively on every
/// reachable requires_grad node; interior nodes release their inputs and
/// backward rules afterwards, so the graph cannot be swept twice.
template <typename Scalar>
void backward(const Tensor<Scalar>& root) {
  if (!root.defined() || root.numel() != 1) {
    throw UsageError("backward() needs a scalar root, got shape " +
                     (root.defined() ? shape_string(root.shape()) : std::string("<undefined>")));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS: `order` ends up topologically sorted (inputs first).
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> visited;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<Scalar>* child = node->inputs[next++].get();
      if (child && child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer() += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>& node = **it;
    if (node.backward) {
      node.grad_buffer();
      node.backward(node);
    }
  }
  for (Node<Scalar>* node : order) {
    if (!node->is_leaf()) {
      node->backward = nullptr;
      node->inputs.clear();
    }
  }
}

}  // namespace spikereg
