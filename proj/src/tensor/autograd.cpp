#include "cat/autograd.hpp"

#include <string>

namespace cat {

template <typename T>
const Tensor<T>& Gradients<T>::operator[](const Var<T>& leaf) const {
  if (!contains(leaf)) {
    throw ContractError("no gradient recorded for node " + std::to_string(leaf.node()));
  }
  return *by_node_[static_cast<std::size_t>(leaf.node())];
}

template <typename T>
bool Gradients<T>::contains(const Var<T>& leaf) const {
  const int n = leaf.node();
  return n >= 0 && static_cast<std::size_t>(n) < by_node_.size() &&
         by_node_[static_cast<std::size_t>(n)].has_value();
}

template <typename T>
Var<T> Tape<T>::watch(Tensor<T> value) {
  Node node;
  node.shape = value.shape();
  node.leaf = true;
  nodes_.push_back(std::move(node));
  return Var<T>(std::make_shared<const Tensor<T>>(std::move(value)), this,
                static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::span<const Var<T>* const> inputs, BackwardFn fn) {
  Node node;
  node.shape = value.shape();
  node.backward = std::move(fn);
  node.parents.reserve(inputs.size());
  for (const Var<T>* in : inputs) {
    if (in->tracked() && in->tape() != this) {
      throw ContractError("operation mixes variables from different tapes");
    }
    node.parents.push_back(in->tracked() ? in->node() : -1);
  }
  nodes_.push_back(std::move(node));
  return Var<T>(std::make_shared<const Tensor<T>>(std::move(value)), this,
                static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Gradients<T> Tape<T>::backward(const Var<T>& loss) const {
  if (loss.tape() != this) throw ContractError("loss was not recorded on this tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }

  std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
  grads[static_cast<std::size_t>(loss.node())] = Tensor<T>(loss.shape(), T{1});

  std::vector<Tensor<T>*> slots;
  for (int i = loss.node(); i >= 0; --i) {
    const Node& node = nodes_[static_cast<std::size_t>(i)];
    auto& g = grads[static_cast<std::size_t>(i)];
    if (node.leaf || !g) continue;
    slots.assign(node.parents.size(), nullptr);
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      const int parent = node.parents[p];
      if (parent < 0) continue;
      auto& pg = grads[static_cast<std::size_t>(parent)];
      if (!pg) pg.emplace(nodes_[static_cast<std::size_t>(parent)].shape, T{0});
      slots[p] = &*pg;
    }
    node.backward(*g, slots);
    // Interior gradients are dead once propagated.
    g.reset();
  }

  Gradients<T> out;
  out.by_node_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].leaf) continue;
    out.by_node_[i] = grads[i] ? std::move(*grads[i]) : Tensor<T>(nodes_[i].shape, T{0});
  }
  return out;
}

template <typename T>
Var<T> make_result(Tensor<T> value, std::initializer_list<const Var<T>*> inputs,
                   typename Tape<T>::BackwardFn fn) {
  Tape<T>* tape = nullptr;
  for (const Var<T>* in : inputs) {
    if (in->tracked()) {
      tape = in->tape();
      break;
    }
  }
  if (!tape) return Var<T>(std::move(value));
  std::vector<const Var<T>*> list(inputs);
  return tape->record(std::move(value), list, std::move(fn));
}

template class Gradients<float>;
template class Gradients<double>;
template class Tape<float>;
template class Tape<double>;
template Var<float> make_result(Tensor<float>, std::initializer_list<const Var<float>*>,
                                Tape<float>::BackwardFn);
template Var<double> make_result(Tensor<double>, std::initializer_list<const Var<double>*>,
                                 Tape<double>::BackwardFn);

}  // namespace cat
