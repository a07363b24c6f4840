#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <vector>

#include "gnasforge/macro_router.hpp"
#include "gnasforge/micro_space.hpp"

namespace gnasforge {

/// Discrete architecture: one operator per sub-block per layer plus the kept
/// shortcut connections.
struct Genotype {
  std::vector<BlockChoice> layers;
  RoutingSet routing;
  std::vector<std::size_t> hidden_sizes;
  std::uint64_t seed = 0;

  /// Throws unless every layer has a hidden size, every head count divides
  /// it, and every shortcut (i, j) satisfies i <= j < L.
  void validate() const;

  friend bool operator==(const Genotype&, const Genotype&) = default;
};

nlohmann::json genotype_to_json(const Genotype& g);
Genotype genotype_from_json(const nlohmann::json& doc);
Genotype load_genotype(const std::filesystem::path& path);
void save_genotype(const std::filesystem::path& path, const Genotype& g);

}  // namespace gnasforge
