#include <set>
#include <stdexcept>

#include "gnasforge/graph.hpp"
#include "gnasforge/rng.hpp"

namespace gnasforge {

SyntheticDataset generate_sbm(const SbmParams& p) {
  if (p.num_classes < 2) throw std::invalid_argument("generate_sbm: need at least 2 classes");
  if (p.nodes_per_class == 0) throw std::invalid_argument("generate_sbm: empty blocks");
  if (!(0.0 <= p.p_out && p.p_out < p.p_in && p.p_in <= 1.0)) {
    throw std::invalid_argument("generate_sbm: require 0 <= p_out < p_in <= 1");
  }
  if (p.feature_dim < p.num_classes) {
    throw std::invalid_argument("generate_sbm: feature_dim " + std::to_string(p.feature_dim) +
                                " is smaller than num_classes " + std::to_string(p.num_classes));
  }
  if (p.feature_noise < 0) throw std::invalid_argument("generate_sbm: negative feature_noise");

  Rng rng(p.seed);
  GraphInput in;
  in.num_nodes = p.num_classes * p.nodes_per_class;
  in.task = TaskKind::Single;
  in.num_classes = p.num_classes;
  for (std::size_t i = 0; i < in.num_nodes; ++i) in.labels.push_back(i / p.nodes_per_class);

  for (std::size_t i = 0; i < in.num_nodes; ++i) {
    for (std::size_t j = i + 1; j < in.num_nodes; ++j) {
      const double prob = in.labels[i] == in.labels[j] ? p.p_in : p.p_out;
      if (rng.uniform() < prob) in.edges.emplace_back(i, j);
    }
  }
  in.features = Tensor::matrix(in.num_nodes, p.feature_dim);
  for (std::size_t i = 0; i < in.num_nodes; ++i) {
    for (std::size_t d = 0; d < p.feature_dim; ++d) {
      const double centroid = d == in.labels[i] ? 1.0 : 0.0;
      in.features(i, d) = p.feature_noise == 0.0 ? centroid : centroid + p.feature_noise * rng.normal();
    }
  }
  Graph g = Graph::build(in);
  return {g, g.spec()};
}

SyntheticDataset generate_chain_task(std::size_t length, std::size_t depth, std::uint64_t seed) {
  if (length < 20) {
    throw std::invalid_argument("generate_chain_task: length must be at least 20, got " +
                                std::to_string(length));
  }
  constexpr std::size_t kFeatureDim = 8;
  Rng rng(seed);
  GraphInput in;
  in.num_nodes = length;
  in.task = TaskKind::Single;
  in.num_classes = 2;
  in.features = Tensor::matrix(length, kFeatureDim);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t label = rng.below(2);
    in.labels.push_back(label);
    in.features(i, 0) = label == 1 ? 1.0 : -1.0;
    for (std::size_t d = 1; d < kFeatureDim; ++d) in.features(i, d) = rng.normal();
  }

  std::set<std::pair<std::size_t, std::size_t>> used;
  for (std::size_t i = 0; i + 1 < length; ++i) {
    in.edges.emplace_back(i, i + 1);
    used.emplace(i, i + 1);
  }
  const std::size_t distractors = length * depth;
  const std::size_t capacity = length * (length - 1) / 2;
  while (used.size() < std::min(capacity, (length - 1) + distractors)) {
    std::size_t a = rng.below(length), b = rng.below(length);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (used.emplace(a, b).second) in.edges.emplace_back(a, b);
  }
  Graph g = Graph::build(in);
  return {g, g.spec()};
}

}  // namespace gnasforge
