#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lcm/core/parameters.hpp"
#include "lcm/core/tensor.hpp"

namespace lcm {

template <class T>
class Tape;

class GraphError : public Error {
 public:
  using Error::Error;
};

/// Handle to a value recorded on a Tape. Handles become stale once the tape
/// is cleared (after backward() or an explicit clear()).
template <class T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  std::size_t id() const { return id_; }
  Tape<T>* tape() const { return tape_; }
  std::uint64_t generation() const { return generation_; }
  bool valid() const;

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
  std::uint64_t generation_ = 0;
};

/// Gradients of the non-parameter leaves that requested them, captured at backward time.
template <class T>
class Gradients {
 public:
  const Tensor<T>& of(const Var<T>& leaf) const {
    if (leaf.generation() != generation_) {
      throw GraphError("Gradients::of: variable belongs to a different forward pass");
    }
    auto it = grads_.find(leaf.id());
    if (it == grads_.end()) throw GraphError("Gradients::of: variable did not request a gradient");
    return it->second;
  }

 private:
  friend class Tape<T>;
  std::uint64_t generation_ = 0;
  std::unordered_map<std::size_t, Tensor<T>> grads_;
};

/// Define-by-run reverse-mode graph. Nodes are appended in evaluation order,
/// so every node's inputs carry smaller ids and reverse id order is a valid
/// reverse topological order.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, "constant"); }

  /// Leaf whose gradient is reported by backward().
  Var<T> variable(Tensor<T> value) { return push(std::move(value), true, "variable"); }

  /// Leaf bound to a named parameter. Repeated requests within one pass share a node.
  Var<T> param(ParameterStore<T>& store, std::string_view name);

  /// Appends an operation node. The backward closure is kept only if some input
  /// requires a gradient.
  Var<T> record(const char* op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn backward) {
    return record(op, std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  Var<T> record(const char* op, Tensor<T> value, std::span<const Var<T>> inputs,
                BackwardFn backward) {
    bool needs_grad = false;
    for (const auto& in : inputs) {
      check_owned(in, op);
      needs_grad = needs_grad || nodes_[in.id()].requires_grad;
    }
    Var<T> out = push(std::move(value), needs_grad, op);
    if (needs_grad) nodes_[out.id()].backward = std::move(backward);
    return out;
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  void accumulate(std::size_t id, Tensor<T> grad) {
    Node& node = nodes_[id];
    if (!node.requires_grad) return;
    if (node.grad.empty()) {
      node.grad = std::move(grad);
      return;
    }
    auto dst = node.grad.values();
    auto src = grad.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  /// Reverse sweep from a scalar loss. Parameter gradients land in their stores
  /// (zeros for parameters of a touched store that the loss does not reach);
  /// leaf-variable gradients are returned. The tape is cleared afterwards.
  Gradients<T> backward(const Var<T>& loss);

  void clear() {
    nodes_.clear();
    param_nodes_.clear();
    stores_.clear();
    ++generation_;
  }

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }

  void check_owned(const Var<T>& v, const char* op) const {
    if (v.tape_ != this) {
      throw GraphError(std::string(op) + ": input recorded on a different tape");
    }
    if (v.generation_ != generation_ || v.id_ >= nodes_.size()) {
      throw GraphError(std::string(op) +
                       ": stale variable (graph was cleared by backward() or clear())");
    }
  }

 private:
  friend class Var<T>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    const char* op = "";
    bool requires_grad = false;
    ParameterStore<T>* store = nullptr;
    std::size_t param_index = 0;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, const char* op) {
    if (value.empty()) throw ShapeError(std::string(op) + ": empty tensor");
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    node.op = op;
    nodes_.push_back(std::move(node));
    return Var<T>(this, nodes_.size() - 1, generation_);
  }

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> param_nodes_;
  std::vector<ParameterStore<T>*> stores_;
  std::uint64_t generation_ = 1;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  if (tape_ == nullptr) throw GraphError("Var: uninitialised handle");
  tape_->check_owned(*this, "Var::value");
  return tape_->nodes_[id_].value;
}

template <class T>
bool Var<T>::requires_grad() const {
  if (tape_ == nullptr) throw GraphError("Var: uninitialised handle");
  tape_->check_owned(*this, "Var::requires_grad");
  return tape_->nodes_[id_].requires_grad;
}

template <class T>
bool Var<T>::valid() const {
  return tape_ != nullptr && tape_->generation_ == generation_ && id_ < tape_->nodes_.size();
}

template <class T>
Var<T> Tape<T>::param(ParameterStore<T>& store, std::string_view name) {
  const std::size_t index = store.index_of(name);
  std::string key = std::to_string(reinterpret_cast<std::uintptr_t>(&store)) + '/' + std::string(name);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) {
    return Var<T>(this, it->second, generation_);
  }
  Var<T> v = push(store.entry(index).value, true, "param");
  nodes_[v.id()].store = &store;
  nodes_[v.id()].param_index = index;
  param_nodes_.emplace(std::move(key), v.id());
  bool seen = false;
  for (auto* s : stores_) seen = seen || s == &store;
  if (!seen) stores_.push_back(&store);
  return v;
}

template <class T>
Gradients<T> Tape<T>::backward(const Var<T>& loss) {
  check_owned(loss, "backward");
  if (nodes_[loss.id()].value.size() != 1) {
    throw GraphError("backward: loss must be a scalar, got shape " +
                     to_string(nodes_[loss.id()].value.shape()));
  }
  Gradients<T> result;
  result.generation_ = generation_;
  if (nodes_[loss.id()].requires_grad) {
    nodes_[loss.id()].grad = Tensor<T>(nodes_[loss.id()].value.shape(), T{1});
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (node.grad.empty() || !node.backward) continue;
      node.backward(*this, node.grad, i);
    }
  }
  for (auto* store : stores_) {
    for (auto& entry : store->entries()) {
      entry.grad.fill(T{0});
      entry.has_grad = true;
    }
  }
  for (auto& node : nodes_) {
    if (node.store != nullptr) {
      auto& entry = node.store->entry(node.param_index);
      if (!node.grad.empty()) entry.grad = std::move(node.grad);
    } else if (std::string_view(node.op) == "variable") {
      std::size_t id = static_cast<std::size_t>(&node - nodes_.data());
      result.grads_.emplace(id, node.grad.empty() ? Tensor<T>::zeros(node.value.shape())
                                                   : std::move(node.grad));
    }
  }
  clear();
  return result;
}

}  // namespace lcm
