#include "gnasforge/network.hpp"

#include <stdexcept>

#include "gnasforge/init.hpp"
#include "gnasforge/ops.hpp"

namespace gnasforge {
namespace {

ControllerLayout layout_for(const SearchSpace& s) {
  return ControllerLayout{std::vector<CandidateLists>(s.layers, s.candidates)};
}

std::vector<std::size_t> block_inputs(std::size_t input_dim, const std::vector<std::size_t>& hidden) {
  std::vector<std::size_t> dims{input_dim};
  for (std::size_t i = 0; i + 1 < hidden.size(); ++i) dims.push_back(hidden[i]);
  return dims;
}

std::string block_prefix(const std::string& net, std::size_t layer) {
  return net + "/block" + std::to_string(layer);
}

}  // namespace

void SearchSpace::validate() const {
  if (layers < 2) throw std::invalid_argument("search space: at least 2 layers required");
  if (hidden == 0 || hidden % 16 != 0) {
    throw std::invalid_argument("search space: hidden size " + std::to_string(hidden) +
                                " is not a positive multiple of 16");
  }
  if (input_dim == 0) throw std::invalid_argument("search space: input dimension is zero");
  if (num_classes < 2) throw std::invalid_argument("search space: fewer than 2 classes");
  candidates.validate(hidden);
}

Supernet::Supernet(SearchSpace space, std::uint64_t seed)
    : space_((space.validate(), std::move(space))),
      controller_(layout_for(space_)),
      router_(block_inputs(space_.input_dim, std::vector<std::size_t>(space_.layers, space_.hidden)),
              space_.hidden) {
  Rng rng(seed);
  for (std::size_t i = 0; i < space_.layers; ++i) {
    BlockSpace bs{i, i == 0 ? space_.input_dim : space_.hidden, space_.hidden, space_.candidates};
    blocks_.emplace_back(bs, block_prefix("supernet", i));
    blocks_.back().register_params(weights_, rng);
  }
  weights_.add(classifier_name(), glorot_uniform(space_.hidden, space_.num_classes, rng));
  controller_.register_params(micro_, rng);
  router_.register_priors(macro_);
  if (space_.router_enabled) router_.register_shortcuts(weights_, rng);
}

void Supernet::freeze_block(std::size_t layer) {
  if (layer >= blocks_.size()) {
    throw std::out_of_range("freeze_block: no block " + std::to_string(layer));
  }
  weights_.set_trainable_prefix(blocks_[layer].prefix() + "/", false);
}

Var Supernet::forward(Tape& tape, const Graph& graph, const std::vector<Selection>& selection,
                      ScaleMode mode, const std::vector<SubBlockScales>* scales,
                      const Gates* gates) const {
  if (selection.size() != space_.layers) {
    throw std::invalid_argument("Supernet::forward: " + std::to_string(selection.size()) +
                                " selections for " + std::to_string(space_.layers) + " layers");
  }
  if (graph.feature_dim() != space_.input_dim) {
    throw std::invalid_argument("Supernet::forward: graph features have width " +
                                std::to_string(graph.feature_dim()) + ", search space expects " +
                                std::to_string(space_.input_dim));
  }
  Var x = tape.constant(graph.features());
  std::vector<Var> inputs;
  for (std::size_t j = 0; j < space_.layers; ++j) {
    inputs.push_back(x);
    const SubBlockScales none;
    const Var out = block_forward(graph, x, selection[j], blocks_[j], weights_, mode,
                                  scales ? scales->at(j) : none);
    x = (space_.router_enabled && gates)
            ? router_.route_output(j, inputs, out, *gates, weights_)
            : out;
  }
  return ops::matmul(x, tape.param(weights_, classifier_name()));
}

GenotypeNetwork::GenotypeNetwork(Genotype genotype, std::size_t input_dim,
                                 std::size_t num_classes, std::uint64_t seed)
    : genotype_((genotype.validate(), std::move(genotype))),
      input_dim_(input_dim),
      num_classes_(num_classes),
      router_(block_inputs(input_dim, genotype_.hidden_sizes), genotype_.hidden_sizes.back(),
              "genotype/router") {
  for (const auto& [i, j] : genotype_.routing) {
    if (genotype_.hidden_sizes[j] != genotype_.hidden_sizes.back()) {
      throw std::invalid_argument("genotype: shortcut into layer " + std::to_string(j) +
                                  " requires its hidden size to match the final layer");
    }
  }
  Rng rng(seed);
  const std::size_t layers = genotype_.layers.size();
  for (std::size_t i = 0; i < layers; ++i) {
    BlockSpace bs{i, i == 0 ? input_dim : genotype_.hidden_sizes[i - 1], genotype_.hidden_sizes[i],
                  CandidateLists::single(genotype_.layers[i])};
    blocks_.emplace_back(bs, block_prefix("genotype", i));
    blocks_.back().register_params(params_, rng);
  }
  params_.add(classifier_name(), glorot_uniform(genotype_.hidden_sizes.back(), num_classes, rng));
  router_.register_shortcuts(params_, rng, genotype_.routing);
}

void GenotypeNetwork::freeze_block(std::size_t layer) {
  if (layer >= blocks_.size()) {
    throw std::out_of_range("freeze_block: no block " + std::to_string(layer));
  }
  params_.set_trainable_prefix(blocks_[layer].prefix() + "/", false);
}

Var GenotypeNetwork::forward(Tape& tape, const Graph& graph) const {
  if (graph.feature_dim() != input_dim_) {
    throw std::invalid_argument("GenotypeNetwork: graph features have width " +
                                std::to_string(graph.feature_dim()) + ", network expects " +
                                std::to_string(input_dim_));
  }
  const Gates gates = router_.binary_gates(genotype_.routing);
  Var x = tape.constant(graph.features());
  std::vector<Var> inputs;
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    inputs.push_back(x);
    const BlockWeights w = blocks_[j].bind(tape, params_, genotype_.layers[j]);
    const Var out = graph_block(graph, x, genotype_.layers[j], w);
    x = genotype_.routing.empty() ? out : router_.route_output(j, inputs, out, gates, params_);
  }
  return ops::matmul(x, tape.param(params_, classifier_name()));
}

}  // namespace gnasforge
