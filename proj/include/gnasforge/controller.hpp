#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gnasforge/micro_space.hpp"
#include "gnasforge/params.hpp"
#include "gnasforge/rng.hpp"
#include "gnasforge/tape.hpp"

namespace gnasforge {

inline constexpr std::size_t kControllerWidth = 256;

/// Candidate-list lengths T_{i,k} for every layer i and sub-block k.
struct ControllerLayout {
  std::vector<CandidateLists> layers;

  std::size_t num_layers() const { return layers.size(); }
  std::size_t length(std::size_t layer, SubBlock k) const { return layers.at(layer).size(k); }
};

/// Probability vector per (layer, sub-block), each [1, T].
template <typename T>
using PerSubBlock = std::vector<std::array<T, kSubBlockCount>>;
using ProbabilityTensor = PerSubBlock<Tensor>;
using ProbabilityVars = PerSubBlock<Var>;
using OperatorIndex = PerSubBlock<std::size_t>;

/// Multi-hot NAS controller: trainable prior z -> MLP(256-256-256, ReLU, no
/// bias) -> one linear projection per (layer, sub-block) -> softmax.
class Controller {
 public:
  Controller(ControllerLayout layout, std::string prefix = "controller");

  const ControllerLayout& layout() const { return layout_; }

  /// z ~ N(0, 0.01^2); MLP and projections Glorot uniform.
  void register_params(ParameterStore& store, Rng& rng) const;

  std::string prior_name() const { return prefix_ + "/z"; }
  std::string mlp_name(std::size_t i) const;
  std::string head_name(std::size_t layer, SubBlock k) const;

  /// Noise-free probabilities P-bar on `tape`.
  ProbabilityVars forward(Tape& tape, const ParameterStore& store) const;
  /// Value-only convenience wrapper around forward().
  ProbabilityTensor probabilities(const ParameterStore& store) const;

 private:
  ControllerLayout layout_;
  std::string prefix_;
};

/// One uniform(0,1) draw per entry of every probability vector.
ProbabilityTensor sample_exploration_noise(const ControllerLayout& layout, Rng& rng);

/// P = (P-bar + tau * U) / Z with Z the sum of the numerator.
Var add_noise(Var p_bar, double tau, const Tensor& uniform_draws);
Tensor add_noise(const Tensor& p_bar, double tau, const Tensor& uniform_draws);
ProbabilityVars add_noise(const ProbabilityVars& p_bar, double tau, const ProbabilityTensor& noise);

/// argmax per vector, ties to the lowest index.
OperatorIndex extract_indices(const ProbabilityTensor& p);

/// Selection for one layer: indices plus the probability values at them.
Selection selection_for_layer(const ProbabilityTensor& p, const OperatorIndex& index,
                              std::size_t layer);

ProbabilityTensor values_of(const ProbabilityVars& vars);

}  // namespace gnasforge
