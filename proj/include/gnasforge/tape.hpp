#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gnasforge/tensor.hpp"

namespace gnasforge {

class Tape;
class ParameterStore;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradients of a scalar loss keyed by parameter name.
using Gradients = std::map<std::string, Tensor>;

/// Records a differentiable computation in execution order and replays it
/// backwards. Nodes are appended as primitives run, so inputs always precede
/// their consumers. A tape is single-threaded and single-use per forward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Named leaf. Trainable leaves appear in the result of backward().
  Var leaf(std::string name, Tensor value, bool trainable = true);
  /// Leaf holding a copy of a registered parameter; trainability follows the
  /// store's flag. Repeated calls for the same name return the same node.
  Var param(const ParameterStore& store, const std::string& name);

  /// Appends a primitive's result. `backward` is only invoked when at least
  /// one input requires a gradient.
  Var record(std::string_view primitive, Tensor value, const std::vector<Var>& inputs,
             BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::string_view primitive(std::size_t id) const { return nodes_.at(id).primitive; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds `grad` into the gradient buffer of node `id` (no-op when the node
  /// does not require a gradient). Only meaningful inside a backward pass.
  void accumulate(std::size_t id, const Tensor& grad);
  /// Mutable gradient buffer for node `id`, zero-initialised on first use.
  Tensor& grad_buffer(std::size_t id);

  /// Reverse sweep from a scalar loss. Every node is visited exactly once.
  Gradients backward(Var loss);

 private:
  struct Node {
    std::string primitive;
    Tensor value;
    BackwardFn backward;
    std::string name;
    bool trainable = false;
    bool requires_grad = false;
  };

  Var check_owned(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::map<std::string, std::size_t> param_nodes_;
};

}  // namespace gnasforge
