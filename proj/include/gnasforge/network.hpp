#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gnasforge/controller.hpp"
#include "gnasforge/genotype.hpp"
#include "gnasforge/graph.hpp"
#include "gnasforge/macro_router.hpp"
#include "gnasforge/micro_space.hpp"
#include "gnasforge/params.hpp"

namespace gnasforge {

struct SearchSpace {
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t input_dim = 0;
  std::size_t num_classes = 2;
  CandidateLists candidates;
  bool router_enabled = true;

  void validate() const;
};

/// Weight superset for the search: every candidate operator of every block,
/// every forward shortcut, and the classifier. Parameters live in three
/// stores so each optimiser only ever sees its own group:
///   weights()  w        blocks, shortcuts g_ij, classifier
///   micro()    a_micro  controller
///   macro()    a_macro  routing priors theta
class Supernet {
 public:
  Supernet(SearchSpace space, std::uint64_t seed);

  const SearchSpace& space() const { return space_; }
  ParameterStore& weights() { return weights_; }
  ParameterStore& micro() { return micro_; }
  ParameterStore& macro() { return macro_; }
  const ParameterStore& weights() const { return weights_; }
  const ParameterStore& micro() const { return micro_; }
  const ParameterStore& macro() const { return macro_; }

  const Controller& controller() const { return controller_; }
  Router& router() { return router_; }
  const Router& router() const { return router_; }
  const std::vector<BlockParams>& blocks() const { return blocks_; }
  std::string classifier_name() const { return "supernet/classifier"; }

  /// Marks one block's candidate weights non-trainable.
  void freeze_block(std::size_t layer);

  /// Logits [N, C]. `scales` (one per layer) feeds the controller's
  /// probabilities into Attached mode; `gates` is ignored when the router
  /// is disabled.
  Var forward(Tape& tape, const Graph& graph, const std::vector<Selection>& selection,
              ScaleMode mode, const std::vector<SubBlockScales>* scales,
              const Gates* gates) const;

 private:
  SearchSpace space_;
  ParameterStore weights_, micro_, macro_;
  Controller controller_;
  Router router_;
  std::vector<BlockParams> blocks_;
};

/// Network holding only a genotype's operators and shortcuts.
class GenotypeNetwork {
 public:
  GenotypeNetwork(Genotype genotype, std::size_t input_dim, std::size_t num_classes,
                  std::uint64_t seed);

  const Genotype& genotype() const { return genotype_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const std::vector<BlockParams>& blocks() const { return blocks_; }
  const Router& router() const { return router_; }
  std::string classifier_name() const { return "genotype/classifier"; }

  void freeze_block(std::size_t layer);

  Var forward(Tape& tape, const Graph& graph) const;

 private:
  Genotype genotype_;
  std::size_t input_dim_;
  std::size_t num_classes_;
  ParameterStore params_;
  std::vector<BlockParams> blocks_;
  Router router_;
};

/// Labels restricted to what the loss and metric need.
struct NodeLabels {
  TaskKind task = TaskKind::Single;
  std::size_t num_classes = 2;
  std::vector<std::size_t> classes;  // single-label
  Tensor matrix;                     // multi-label
};

NodeLabels labels_of(const Graph& graph);

/// Mean softmax cross-entropy (single) or mean elementwise sigmoid binary
/// cross-entropy (multi) over the masked rows.
Var compute_loss(Var logits, const NodeLabels& labels, std::span<const std::size_t> mask);

/// Accuracy (single) or micro-F1 at sigmoid threshold 0.5 (multi). Micro-F1
/// with no positive predictions and no positive labels is 1.
double evaluate(const Tensor& logits, const NodeLabels& labels, std::span<const std::size_t> mask);

}  // namespace gnasforge
