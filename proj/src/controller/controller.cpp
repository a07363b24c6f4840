#include "gnasforge/controller.hpp"

#include <stdexcept>

#include "gnasforge/init.hpp"
#include "gnasforge/ops.hpp"

namespace gnasforge {

Controller::Controller(ControllerLayout layout, std::string prefix)
    : layout_(std::move(layout)), prefix_(std::move(prefix)) {
  if (layout_.layers.empty()) throw std::invalid_argument("Controller: no layers");
}

std::string Controller::mlp_name(std::size_t i) const {
  return prefix_ + "/mlp" + std::to_string(i);
}

std::string Controller::head_name(std::size_t layer, SubBlock k) const {
  return prefix_ + "/head/block" + std::to_string(layer) + "/" + to_string(k);
}

void Controller::register_params(ParameterStore& store, Rng& rng) const {
  Tensor z = Tensor::matrix(1, kControllerWidth);
  for (double& v : z.data()) v = 0.01 * rng.normal();
  store.add(prior_name(), std::move(z));
  store.add(mlp_name(0), glorot_uniform(kControllerWidth, kControllerWidth, rng));
  store.add(mlp_name(1), glorot_uniform(kControllerWidth, kControllerWidth, rng));
  for (std::size_t i = 0; i < layout_.num_layers(); ++i)
    for (SubBlock k : kSubBlocks)
      store.add(head_name(i, k), glorot_uniform(kControllerWidth, layout_.length(i, k), rng));
}

ProbabilityVars Controller::forward(Tape& tape, const ParameterStore& store) const {
  Var hidden = tape.param(store, prior_name());
  hidden = ops::relu(ops::matmul(hidden, tape.param(store, mlp_name(0))));
  hidden = ops::matmul(hidden, tape.param(store, mlp_name(1)));
  ProbabilityVars out(layout_.num_layers());
  for (std::size_t i = 0; i < layout_.num_layers(); ++i)
    for (SubBlock k : kSubBlocks)
      out[i][static_cast<std::size_t>(k)] =
          ops::softmax_rows(ops::matmul(hidden, tape.param(store, head_name(i, k))));
  return out;
}

ProbabilityTensor Controller::probabilities(const ParameterStore& store) const {
  Tape tape;
  return values_of(forward(tape, store));
}

ProbabilityTensor values_of(const ProbabilityVars& vars) {
  ProbabilityTensor out(vars.size());
  for (std::size_t i = 0; i < vars.size(); ++i)
    for (std::size_t k = 0; k < kSubBlockCount; ++k) out[i][k] = vars[i][k].value();
  return out;
}

ProbabilityTensor sample_exploration_noise(const ControllerLayout& layout, Rng& rng) {
  ProbabilityTensor noise(layout.num_layers());
  for (std::size_t i = 0; i < layout.num_layers(); ++i) {
    for (SubBlock k : kSubBlocks) {
      Tensor u = Tensor::matrix(1, layout.length(i, k));
      for (double& v : u.data()) v = rng.uniform();
      noise[i][static_cast<std::size_t>(k)] = std::move(u);
    }
  }
  return noise;
}

Var add_noise(Var p_bar, double tau, const Tensor& uniform_draws) {
  if (tau < 0) throw std::invalid_argument("add_noise: negative temperature");
  if (p_bar.shape() != uniform_draws.shape()) {
    throw std::invalid_argument("add_noise: probabilities " + shape_string(p_bar.shape()) +
                                " vs noise " + shape_string(uniform_draws.shape()));
  }
  Tape& tape = *p_bar.tape();
  const Var numerator = ops::add(p_bar, ops::scale(tape.constant(uniform_draws), tau));
  return ops::div(numerator, ops::sum(numerator));
}

Tensor add_noise(const Tensor& p_bar, double tau, const Tensor& uniform_draws) {
  Tape tape;
  return add_noise(tape.constant(p_bar), tau, uniform_draws).value();
}

ProbabilityVars add_noise(const ProbabilityVars& p_bar, double tau,
                          const ProbabilityTensor& noise) {
  ProbabilityVars out(p_bar.size());
  for (std::size_t i = 0; i < p_bar.size(); ++i)
    for (std::size_t k = 0; k < kSubBlockCount; ++k)
      out[i][k] = add_noise(p_bar[i][k], tau, noise.at(i)[k]);
  return out;
}

OperatorIndex extract_indices(const ProbabilityTensor& p) {
  OperatorIndex out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t k = 0; k < kSubBlockCount; ++k)
      out[i][k] = select_operator(p[i][k].data()).index;
  return out;
}

Selection selection_for_layer(const ProbabilityTensor& p, const OperatorIndex& index,
                              std::size_t layer) {
  Selection s;
  for (std::size_t k = 0; k < kSubBlockCount; ++k) {
    const std::size_t t = index.at(layer)[k];
    s.entries[k] = SelectionEntry{t, p.at(layer)[k][t]};
  }
  return s;
}

}  // namespace gnasforge
