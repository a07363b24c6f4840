#include "gnasforge/tape.hpp"

#include <stdexcept>

#include "gnasforge/kernels.hpp"
#include "gnasforge/params.hpp"

namespace gnasforge {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("Var: use of an unbound variable");
  return tape_->value(id_);
}

Var Tape::check_owned(Var v) const {
  if (v.tape() != this) throw std::invalid_argument("Tape: variable belongs to another tape");
  return v;
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, false, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(std::string name, Tensor value, bool trainable) {
  nodes_.push_back(Node{"leaf", std::move(value), {}, std::move(name), trainable, trainable});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParameterStore& store, const std::string& name) {
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return Var(this, it->second);
  Var v = leaf(name, store.value(name), store.trainable(name));
  param_nodes_.emplace(name, v.id());
  return v;
}

Var Tape::record(std::string_view primitive, Tensor value, const std::vector<Var>& inputs,
                 BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) needs = needs || nodes_.at(check_owned(in).id()).requires_grad;
  nodes_.push_back(Node{std::string(primitive), std::move(value),
                        needs ? std::move(backward) : BackwardFn{}, {}, false, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Tensor& g = grads_.at(id);
  if (g.numel() == 0 && nodes_[id].value.numel() != 0) g = Tensor(nodes_[id].value.shape(), 0.0);
  return g;
}

void Tape::accumulate(std::size_t id, const Tensor& grad) {
  if (!nodes_.at(id).requires_grad) return;
  Tensor& g = grad_buffer(id);
  if (g.shape() != grad.shape()) {
    throw std::logic_error("Tape: gradient of shape " + shape_string(grad.shape()) +
                           " for node '" + nodes_[id].primitive + "' of shape " +
                           shape_string(g.shape()));
  }
  kernels::active().add(g.numel(), g.data().data(), grad.data().data(), g.data().data());
}

Gradients Tape::backward(Var loss) {
  check_owned(loss);
  const Tensor& out = loss.value();
  if (!out.is_scalar()) {
    throw std::invalid_argument("Tape::backward: loss must be a scalar, got shape " +
                                shape_string(out.shape()));
  }
  grads_.assign(nodes_.size(), Tensor{});
  Gradients result;
  if (!nodes_[loss.id()].requires_grad) return result;
  grads_[loss.id()] = Tensor(out.shape(), 1.0);

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || grads_[id].numel() == 0) continue;
    if (node.backward) {
      node.backward(*this, grads_[id]);
    } else if (node.trainable) {
      auto [it, inserted] = result.emplace(node.name, grads_[id]);
      if (!inserted) {
        kernels::active().add(it->second.numel(), it->second.data().data(),
                              grads_[id].data().data(), it->second.data().data());
      }
    }
    grads_[id] = Tensor{};
  }
  grads_.clear();
  return result;
}

}  // namespace gnasforge
