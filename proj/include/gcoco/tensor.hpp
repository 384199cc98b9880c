#pragma once

// Dense 2-D tensors with reverse-mode gradient tracking.
//
// A Tensor is a cheap shared handle to a graph node. Operations in ops.hpp
// create new nodes whose backward closures push gradients into their parents;
// backward() walks the graph in reverse topological order. Leaf gradients
// accumulate across calls until zero_grad() is called.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gcoco/error.hpp"

namespace gcoco {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename Scalar>
struct Node {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;  // empty until first written
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() == 0) grad = Matrix<Scalar>::Zero(value.rows(), value.cols());
  }
};

}  // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

template <typename Scalar>
class Tensor {
 public:
  using NodeType = detail::Node<Scalar>;
  using MatrixType = Matrix<Scalar>;

  Tensor() = default;

  explicit Tensor(MatrixType value, bool requires_grad = false) : node_(std::make_shared<NodeType>()) {
    if (value.size() == 0) throw ContractViolation("tensor shape must be positive in every dimension");
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false) {
    return Tensor(MatrixType::Zero(rows, cols), requires_grad);
  }

  static Tensor scalar(Scalar v, bool requires_grad = false) {
    MatrixType m(1, 1);
    m(0, 0) = v;
    return Tensor(std::move(m), requires_grad);
  }

  // Builds an interior node. Recording is skipped when grad mode is off or
  // when no parent participates in differentiation.
  static Tensor from_op(MatrixType value, std::vector<Tensor> parents, std::function<void(NodeType&)> backward) {
    Tensor out;
    out.node_ = std::make_shared<NodeType>();
    out.node_->value = std::move(value);
    out.node_->leaf = false;
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward = std::move(backward);
    return out;
  }

  bool defined() const { return static_cast<bool>(node_); }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  std::vector<Index> shape() const { return {rows(), cols()}; }
  Index size() const { return node_->value.size(); }

  const MatrixType& value() const { return node_->value; }
  // Direct access for optimizers and initializers; never use on interior nodes.
  MatrixType& mutable_value() { return node_->value; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) {
    if (!node_->leaf) throw ContractViolation("requires_grad can only be toggled on leaf tensors");
    node_->requires_grad = flag;
    if (!flag) node_->grad.resize(0, 0);
  }
  bool is_leaf() const { return node_->leaf; }

  bool has_grad() const { return node_->grad.size() != 0; }
  const MatrixType& grad() const { return node_->grad; }
  void zero_grad() {
    if (node_->requires_grad) node_->grad = MatrixType::Zero(rows(), cols());
  }

  Scalar item() const {
    if (size() != 1) throw ContractViolation("item() requires a single-element tensor");
    return node_->value(0, 0);
  }

  // Same value, cut off from the tape.
  Tensor detach() const { return Tensor(node_->value, false); }

  // Deep copy into a fresh leaf.
  Tensor clone(bool requires_grad) const { return Tensor(node_->value, requires_grad); }

  const std::shared_ptr<NodeType>& node() const { return node_; }
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<NodeType> node_;
};

// Populates grad on every reachable requires_grad tensor. Interior gradients
// are recomputed from scratch on each call; leaf gradients accumulate.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  using NodePtr = std::shared_ptr<detail::Node<Scalar>>;
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1)
    throw ContractViolation("backward requires a scalar (1x1) loss");
  if (!loss.requires_grad()) return;

  std::vector<detail::Node<Scalar>*> order;
  std::unordered_set<detail::Node<Scalar>*> seen;
  std::vector<std::pair<detail::Node<Scalar>*, bool>> stack{{loss.node().get(), false}};
  while (!stack.empty()) {
    auto [node, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      order.push_back(node);
      continue;
    }
    if (!seen.insert(node).second) continue;
    stack.push_back({node, true});
    for (const NodePtr& p : node->parents)
      if (p->requires_grad && !seen.count(p.get())) stack.push_back({p.get(), false});
  }

  for (auto* node : order)
    if (!node->leaf) node->grad = Matrix<Scalar>::Zero(node->value.rows(), node->value.cols());
  loss.node()->ensure_grad();
  loss.node()->grad(0, 0) += Scalar(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (!(*it)->leaf && (*it)->backward) (*it)->backward(**it);
}

// Converts a tensor to another scalar type as a fresh leaf.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t, bool requires_grad) {
  return Tensor<To>(t.value().template cast<To>(), requires_grad);
}

}  // namespace gcoco
