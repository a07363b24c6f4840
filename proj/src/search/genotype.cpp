#include "gnasforge/genotype.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace gnasforge {
using nlohmann::json;

void Genotype::validate() const {
  if (layers.empty()) throw std::invalid_argument("genotype: no layers");
  if (hidden_sizes.size() != layers.size()) {
    throw std::invalid_argument("genotype: " + std::to_string(layers.size()) + " layers but " +
                                std::to_string(hidden_sizes.size()) + " hidden sizes");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const BlockChoice& c = layers[i];
    if (c.expansion < 1) throw std::invalid_argument("genotype: layer " + std::to_string(i) + " expansion must be positive");
    if (c.heads < 1 || hidden_sizes[i] == 0 || hidden_sizes[i] % static_cast<std::size_t>(c.heads) != 0) {
      throw std::invalid_argument("genotype: layer " + std::to_string(i) + " has " +
                                  std::to_string(c.heads) + " heads for hidden size " +
                                  std::to_string(hidden_sizes[i]));
    }
  }
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& [i, j] : routing) {
    if (i > j || j >= layers.size()) {
      throw std::invalid_argument("genotype: shortcut [" + std::to_string(i) + "," +
                                  std::to_string(j) + "] must satisfy i <= j < " +
                                  std::to_string(layers.size()));
    }
    if (!seen.emplace(i, j).second) {
      throw std::invalid_argument("genotype: duplicate shortcut [" + std::to_string(i) + "," +
                                  std::to_string(j) + "]");
    }
  }
}

json genotype_to_json(const Genotype& g) {
  json layers = json::array();
  for (const BlockChoice& c : g.layers) {
    layers.push_back({{"expansion", c.expansion},
                      {"attention", to_string(c.attention)},
                      {"heads", c.heads},
                      {"aggregate", to_string(c.aggregate)},
                      {"activation", to_string(c.activation)}});
  }
  json routing = json::array();
  for (const auto& [i, j] : g.routing) routing.push_back({i, j});
  return {{"layers", std::move(layers)},
          {"routing", std::move(routing)},
          {"hidden_sizes", g.hidden_sizes},
          {"seed", g.seed}};
}

Genotype genotype_from_json(const json& doc) {
  try {
    Genotype g;
    for (const json& layer : doc.at("layers")) {
      BlockChoice c;
      c.expansion = layer.at("expansion").get<int>();
      c.attention = parse_attention(layer.at("attention").get<std::string>());
      c.heads = layer.at("heads").get<int>();
      c.aggregate = parse_aggregator(layer.at("aggregate").get<std::string>());
      c.activation = parse_activation(layer.at("activation").get<std::string>());
      g.layers.push_back(c);
    }
    for (const json& pair : doc.at("routing")) {
      if (!pair.is_array() || pair.size() != 2) {
        throw std::invalid_argument("genotype: routing entries must be [i, j]");
      }
      g.routing.emplace_back(pair[0].get<std::size_t>(), pair[1].get<std::size_t>());
    }
    g.hidden_sizes = doc.at("hidden_sizes").get<std::vector<std::size_t>>();
    g.seed = doc.at("seed").get<std::uint64_t>();
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("genotype: schema violation: ") + e.what());
  }
}

Genotype load_genotype(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("genotype: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("genotype: " + path.string() + " is not valid JSON: " + e.what());
  }
  return genotype_from_json(doc);
}

void save_genotype(const std::filesystem::path& path, const Genotype& g) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("genotype: cannot write " + path.string());
  out << genotype_to_json(g).dump(2) << '\n';
}

}  // namespace gnasforge
