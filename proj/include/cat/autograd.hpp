#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "cat/tensor.hpp"

namespace cat {

template <typename T>
class Tape;

// A tensor value flowing through the graph. Untracked vars (no tape) are
// plain constants; operations on them record nothing.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value) : value_(std::make_shared<const Tensor<T>>(std::move(value))) {}

  const Tensor<T>& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  std::shared_ptr<const Tensor<T>> shared() const { return value_; }

  bool tracked() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  friend class Tape<T>;
  Var(std::shared_ptr<const Tensor<T>> value, Tape<T>* tape, int node)
      : value_(std::move(value)), tape_(tape), node_(node) {}

  std::shared_ptr<const Tensor<T>> value_ = std::make_shared<const Tensor<T>>();
  Tape<T>* tape_ = nullptr;
  int node_ = -1;
};

// Gradients for the leaves watched on a tape, keyed by node.
template <typename T>
class Gradients {
 public:
  const Tensor<T>& operator[](const Var<T>& leaf) const;
  bool contains(const Var<T>& leaf) const;

 private:
  friend class Tape<T>;
  std::vector<std::optional<Tensor<T>>> by_node_;
};

// Record-replay tape. Nodes are appended in evaluation order, which is a
// topological order of the graph; backward walks it in reverse.
// Single writer: record and backward must come from one thread.
template <typename T>
class Tape {
 public:
  // Accumulates the node's output gradient into its parents' gradients.
  // A parent slot is null when that parent is not tracked.
  using BackwardFn =
      std::function<void(const Tensor<T>& grad_out, std::span<Tensor<T>* const> parent_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf whose gradient backward() will report.
  Var<T> watch(Tensor<T> value);

  // Appends an operation result. Parents that are untracked or belong to
  // another tape are rejected.
  Var<T> record(Tensor<T> value, std::span<const Var<T>* const> inputs, BackwardFn fn);

  Gradients<T> backward(const Var<T>& loss) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<int> parents;  // -1 for untracked inputs
    BackwardFn backward;
    bool leaf = false;
  };
  std::vector<Node> nodes_;
};

// Builds an op result: records on the inputs' tape when any is tracked,
// otherwise returns an untracked constant.
template <typename T>
Var<T> make_result(Tensor<T> value, std::initializer_list<const Var<T>*> inputs,
                   typename Tape<T>::BackwardFn fn);

}  // namespace cat
