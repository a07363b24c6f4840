#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnasforge/graph.hpp"
#include "gnasforge/rng.hpp"

namespace gnasforge {

inline constexpr double kGradcheckTolerance = 1e-4;

struct GradcheckEntry {
  std::string group;
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  /// Instances redrawn because a probe interval straddled a kink.
  std::size_t redraws = 0;
  /// Kinks left in the reported instance (nonzero only if redraws ran out).
  std::size_t kinks = 0;

  bool passed() const { return max_rel_error < kGradcheckTolerance; }
};

/// Groups: primitives, activations, attentions, aggregators, block,
/// block_forward, route, controller, supernet.
std::vector<std::string> gradcheck_groups();
/// Every entry name, grouped in run order.
std::vector<std::string> gradcheck_names();

/// Runs the checks selected by "all", a group name or an entry name.
/// Throws std::invalid_argument for an unknown selector.
std::vector<GradcheckEntry> run_gradcheck(const std::string& selector, std::uint64_t seed = 7);

/// Random undirected graph with `nodes` nodes (edge probability 0.4),
/// normal features, and uniform labels over `classes`.
Graph random_check_graph(Rng& rng, std::size_t nodes, std::size_t feature_dim,
                         std::size_t classes = 2);

}  // namespace gnasforge
