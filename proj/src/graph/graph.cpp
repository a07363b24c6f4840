#include "gnasforge/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "gnasforge/rng.hpp"

namespace gnasforge {
using nlohmann::json;

std::string to_string(TaskKind kind) { return kind == TaskKind::Single ? "single" : "multi"; }

TaskKind parse_task_kind(const std::string& s) {
  if (s == "single") return TaskKind::Single;
  if (s == "multi") return TaskKind::Multi;
  throw std::invalid_argument("task: expected \"single\" or \"multi\", got \"" + s + "\"");
}

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw std::invalid_argument("graph: " + where + ": " + what);
}

std::string at(const char* field, std::size_t i) {
  return std::string(field) + "[" + std::to_string(i) + "]";
}

}  // namespace

Graph Graph::build(const GraphInput& in) {
  Graph g;
  g.num_nodes_ = in.num_nodes;
  g.task_ = in.task;
  g.num_classes_ = in.num_classes;
  if (in.num_nodes == 0) fail("num_nodes", "must be positive");
  if (in.num_classes < 2) fail("num_classes", "must be at least 2");
  if (in.features.rank() != 2 || in.features.rows() != in.num_nodes) {
    fail("features", "expected " + std::to_string(in.num_nodes) + " rows, got shape " +
                         shape_string(in.features.shape()));
  }
  if (!in.features.all_finite()) fail("features", "non-finite value");
  g.features_ = in.features;

  const std::size_t n = in.num_nodes;
  std::vector<std::set<std::size_t>> in_neighbors(n);
  for (std::size_t i = 0; i < n; ++i) in_neighbors[i].insert(i);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t e = 0; e < in.edges.size(); ++e) {
    const auto [src, dst] = in.edges[e];
    if (src >= n || dst >= n) {
      fail(at("edges", e), "endpoint (" + std::to_string(src) + "," + std::to_string(dst) +
                               ") out of range for num_nodes=" + std::to_string(n));
    }
    if (src == dst) continue;  // self-loops are implied
    const auto key = std::minmax(src, dst);
    if (!seen.insert(key).second) {
      fail(at("edges", e), "duplicate edge (" + std::to_string(src) + "," +
                               std::to_string(dst) + ")");
    }
    in_neighbors[dst].insert(src);
    in_neighbors[src].insert(dst);
  }

  g.csr_offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    g.csr_offsets_[i + 1] = g.csr_offsets_[i] + in_neighbors[i].size();
    g.degrees_.push_back(in_neighbors[i].size());
    for (std::size_t j : in_neighbors[i]) {
      g.csr_targets_.push_back(j);
      g.edge_src_.push_back(j);
      g.edge_dst_.push_back(i);
    }
  }
  for (std::size_t e = 0; e < g.edge_src_.size(); ++e) {
    g.gcn_norm_.push_back(1.0 / std::sqrt(static_cast<double>(g.degrees_[g.edge_dst_[e]]) *
                                          static_cast<double>(g.degrees_[g.edge_src_[e]])));
  }

  if (in.task == TaskKind::Single) {
    if (in.labels.size() != n) {
      fail("labels", "expected " + std::to_string(n) + " entries, got " +
                         std::to_string(in.labels.size()));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (in.labels[i] >= in.num_classes) {
        fail(at("labels", i), "class " + std::to_string(in.labels[i]) +
                                  " not below num_classes=" + std::to_string(in.num_classes));
      }
    }
    g.labels_ = in.labels;
  } else {
    if (in.label_matrix.rank() != 2 || in.label_matrix.rows() != n ||
        in.label_matrix.cols() != in.num_classes) {
      fail("labels", "expected a " + std::to_string(n) + "x" + std::to_string(in.num_classes) +
                         " binary matrix, got shape " + shape_string(in.label_matrix.shape()));
    }
    for (std::size_t i = 0; i < in.label_matrix.numel(); ++i) {
      const double v = in.label_matrix[i];
      if (v != 0.0 && v != 1.0) fail(at("labels", i / in.num_classes), "entries must be 0 or 1");
    }
    g.label_matrix_ = in.label_matrix;
  }
  g.set_masks(in.train, in.val, in.test);
  return g;
}

void Graph::set_masks(std::vector<std::size_t> train, std::vector<std::size_t> val,
                      std::vector<std::size_t> test) {
  std::vector<int> owner(num_nodes_, -1);
  const char* names[] = {"train", "val", "test"};
  std::array<std::vector<std::size_t>, 3> sets{std::move(train), std::move(val), std::move(test)};
  for (int s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < sets[s].size(); ++k) {
      const std::size_t node = sets[s][k];
      const std::string where = std::string("masks.") + names[s] + "[" + std::to_string(k) + "]";
      if (node >= num_nodes_) fail(where, "node " + std::to_string(node) + " out of range");
      if (owner[node] == s) fail(where, "node " + std::to_string(node) + " listed twice");
      if (owner[node] >= 0) {
        fail(where, "node " + std::to_string(node) + " already in " + names[owner[node]]);
      }
      owner[node] = s;
    }
    std::sort(sets[s].begin(), sets[s].end());
  }
  masks_ = std::move(sets);
}

bool Graph::has_masks() const {
  return !masks_[0].empty() || !masks_[1].empty() || !masks_[2].empty();
}

bool Graph::in_mask(Split split, std::size_t node) const {
  const auto& m = masks_[index(split)];
  return std::binary_search(m.begin(), m.end(), node);
}

Graph Graph::with_masks(std::vector<std::size_t> train, std::vector<std::size_t> val,
                        std::vector<std::size_t> test) const {
  Graph copy = *this;
  copy.set_masks(std::move(train), std::move(val), std::move(test));
  return copy;
}

std::vector<std::pair<std::size_t, std::size_t>> Graph::undirected_edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < num_nodes_; ++i)
    for (std::size_t e = csr_offsets_[i]; e < csr_offsets_[i + 1]; ++e)
      if (csr_targets_[e] < i) out.emplace_back(csr_targets_[e], i);
  return out;
}

Graph parse_graph_json(const json& doc) {
  try {
    GraphInput in;
    in.num_nodes = doc.at("num_nodes").get<std::size_t>();
    const auto feature_dim = doc.at("feature_dim").get<std::size_t>();
    in.task = parse_task_kind(doc.at("task").get<std::string>());
    in.num_classes = doc.at("num_classes").get<std::size_t>();

    const json& feats = doc.at("features");
    if (!feats.is_array() || feats.size() != in.num_nodes) {
      fail("features", "expected " + std::to_string(in.num_nodes) + " rows");
    }
    std::vector<double> data;
    data.reserve(in.num_nodes * feature_dim);
    for (std::size_t i = 0; i < feats.size(); ++i) {
      if (!feats[i].is_array() || feats[i].size() != feature_dim) {
        fail(at("features", i), "expected " + std::to_string(feature_dim) + " values");
      }
      for (const json& v : feats[i]) data.push_back(v.get<double>());
    }
    in.features = Tensor(Shape{in.num_nodes, feature_dim}, std::move(data));

    const json& edges = doc.at("edges");
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (!edges[e].is_array() || edges[e].size() != 2) fail(at("edges", e), "expected [src, dst]");
      const auto src = edges[e][0].get<std::int64_t>();
      const auto dst = edges[e][1].get<std::int64_t>();
      if (src < 0 || dst < 0) fail(at("edges", e), "negative node index");
      in.edges.emplace_back(static_cast<std::size_t>(src), static_cast<std::size_t>(dst));
    }

    const json& labels = doc.at("labels");
    if (!labels.is_array() || labels.size() != in.num_nodes) {
      fail("labels", "expected " + std::to_string(in.num_nodes) + " entries");
    }
    if (in.task == TaskKind::Single) {
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto c = labels[i].get<std::int64_t>();
        if (c < 0) fail(at("labels", i), "negative class");
        in.labels.push_back(static_cast<std::size_t>(c));
      }
    } else {
      std::vector<double> m;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i].is_array() || labels[i].size() != in.num_classes) {
          fail(at("labels", i), "expected " + std::to_string(in.num_classes) + " binary entries");
        }
        for (const json& v : labels[i]) m.push_back(v.get<double>());
      }
      in.label_matrix = Tensor(Shape{in.num_nodes, in.num_classes}, std::move(m));
    }

    if (auto masks = doc.find("masks"); masks != doc.end() && !masks->is_null()) {
      auto read = [&](const char* key) {
        std::vector<std::size_t> out;
        if (auto it = masks->find(key); it != masks->end()) {
          for (const json& v : *it) {
            const auto node = v.get<std::int64_t>();
            if (node < 0) fail(std::string("masks.") + key, "negative node index");
            out.push_back(static_cast<std::size_t>(node));
          }
        }
        return out;
      };
      in.train = read("train");
      in.val = read("val");
      in.test = read("test");
    }
    return Graph::build(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("graph: schema violation: ") + e.what());
  }
}

Graph load_graph_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("graph: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("graph: " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_graph_json(doc);
}

json graph_to_json(const Graph& g) {
  json doc;
  doc["num_nodes"] = g.num_nodes();
  doc["feature_dim"] = g.feature_dim();
  doc["task"] = to_string(g.task());
  doc["num_classes"] = g.num_classes();
  json feats = json::array();
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < g.feature_dim(); ++j) row.push_back(g.features()(i, j));
    feats.push_back(std::move(row));
  }
  doc["features"] = std::move(feats);
  json edges = json::array();
  for (const auto& [a, b] : g.undirected_edges()) edges.push_back({a, b});
  doc["edges"] = std::move(edges);
  if (g.task() == TaskKind::Single) {
    doc["labels"] = g.labels();
  } else {
    json labels = json::array();
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      json row = json::array();
      for (std::size_t c = 0; c < g.num_classes(); ++c)
        row.push_back(static_cast<int>(g.label_matrix()(i, c)));
      labels.push_back(std::move(row));
    }
    doc["labels"] = std::move(labels);
  }
  if (g.has_masks()) {
    doc["masks"] = {{"train", g.mask(Split::Train)},
                    {"val", g.mask(Split::Val)},
                    {"test", g.mask(Split::Test)}};
  }
  return doc;
}

void save_graph_json(const std::filesystem::path& path, const Graph& graph) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("graph: cannot write " + path.string());
  out << graph_to_json(graph).dump() << '\n';
}

Graph random_split(const Graph& graph, std::array<double, 3> ratios, std::uint64_t seed) {
  const std::size_t n = graph.num_nodes();
  if (n < 5) {
    throw std::invalid_argument("random_split: need at least 5 nodes, got " + std::to_string(n));
  }
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
    throw std::invalid_argument("random_split: ratios must be non-negative and sum to 1");
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  // The small epsilon keeps products such as 0.6 * 5 from flooring to 2.
  const auto n_train = static_cast<std::size_t>(std::floor(ratios[0] * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(ratios[1] * n + 1e-9));
  std::vector<std::size_t> train(perm.begin(), perm.begin() + n_train);
  std::vector<std::size_t> val(perm.begin() + n_train, perm.begin() + n_train + n_val);
  std::vector<std::size_t> test(perm.begin() + n_train + n_val, perm.end());
  return graph.with_masks(std::move(train), std::move(val), std::move(test));
}

}  // namespace gnasforge
