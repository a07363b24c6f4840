#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "gnasforge/tensor.hpp"

namespace gnasforge {

enum class TaskKind { Single, Multi };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& s);

struct DatasetSpec {
  TaskKind task = TaskKind::Single;
  std::size_t num_classes = 2;
  std::size_t feature_dim = 0;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

enum class Split { Train, Val, Test };

/// Everything needed to build a Graph; edges are undirected pairs.
struct GraphInput {
  std::size_t num_nodes = 0;
  TaskKind task = TaskKind::Single;
  std::size_t num_classes = 2;
  Tensor features;  // num_nodes x feature_dim
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::size_t> labels;  // single-label
  Tensor label_matrix;              // multi-label, num_nodes x num_classes of 0/1
  std::vector<std::size_t> train, val, test;
};

/// Node-classification graph. Neighbor sets N(i) are stored as in-neighbor
/// CSR rows; every node carries a self-loop and every undirected input edge
/// is present in both directions. Immutable once built.
class Graph {
 public:
  /// Validates the input, adds self-loops and computes degrees and the
  /// flattened edge lists. Errors name the offending record.
  static Graph build(const GraphInput& input);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return csr_targets_.size(); }
  std::size_t feature_dim() const { return features_.cols(); }
  std::size_t num_classes() const { return num_classes_; }
  TaskKind task() const { return task_; }
  DatasetSpec spec() const { return {task_, num_classes_, feature_dim()}; }

  const Tensor& features() const { return features_; }
  const std::vector<std::size_t>& csr_offsets() const { return csr_offsets_; }
  const std::vector<std::size_t>& csr_targets() const { return csr_targets_; }
  const std::vector<std::size_t>& degrees() const { return degrees_; }

  /// Edge e carries a message from edge_src[e] to edge_dst[e], grouped by
  /// destination in CSR order.
  const std::vector<std::size_t>& edge_src() const { return edge_src_; }
  const std::vector<std::size_t>& edge_dst() const { return edge_dst_; }
  /// 1 / sqrt(d_dst * d_src) per edge.
  const std::vector<double>& gcn_norm() const { return gcn_norm_; }

  const std::vector<std::size_t>& labels() const { return labels_; }
  const Tensor& label_matrix() const { return label_matrix_; }

  bool has_masks() const;
  const std::vector<std::size_t>& mask(Split split) const { return masks_[index(split)]; }
  bool in_mask(Split split, std::size_t node) const;

  /// Copy with the three node sets replaced (validated disjoint).
  Graph with_masks(std::vector<std::size_t> train, std::vector<std::size_t> val,
                   std::vector<std::size_t> test) const;

  /// Undirected edges (j, i), j < i, recovered from the arc set.
  std::vector<std::pair<std::size_t, std::size_t>> undirected_edges() const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  static std::size_t index(Split s) { return static_cast<std::size_t>(s); }
  void set_masks(std::vector<std::size_t> train, std::vector<std::size_t> val,
                 std::vector<std::size_t> test);

  std::size_t num_nodes_ = 0;
  TaskKind task_ = TaskKind::Single;
  std::size_t num_classes_ = 2;
  Tensor features_;
  std::vector<std::size_t> csr_offsets_;
  std::vector<std::size_t> csr_targets_;
  std::vector<std::size_t> degrees_;
  std::vector<std::size_t> edge_src_;
  std::vector<std::size_t> edge_dst_;
  std::vector<double> gcn_norm_;
  std::vector<std::size_t> labels_;
  Tensor label_matrix_;
  std::array<std::vector<std::size_t>, 3> masks_;
};

Graph parse_graph_json(const nlohmann::json& doc);
Graph load_graph_json(const std::filesystem::path& path);
nlohmann::json graph_to_json(const Graph& graph);
void save_graph_json(const std::filesystem::path& path, const Graph& graph);

/// Seeded Fisher-Yates permutation; the first floor(r0*n) nodes train, the
/// next floor(r1*n) validate, the remainder test.
Graph random_split(const Graph& graph, std::array<double, 3> ratios, std::uint64_t seed);

struct SyntheticDataset {
  Graph graph;
  DatasetSpec spec;
};

struct SbmParams {
  std::size_t num_classes = 4;
  std::size_t nodes_per_class = 50;
  double p_in = 0.3;
  double p_out = 0.02;
  std::size_t feature_dim = 16;
  double feature_noise = 0.5;
  std::uint64_t seed = 0;
};

/// Stochastic block model; node n belongs to block n / nodes_per_class.
/// Features are the one-hot block centroid plus N(0, feature_noise^2) noise.
SyntheticDataset generate_sbm(const SbmParams& params);

/// Two-class task whose label is readable from raw feature 0 alone; the
/// edges (a path through all nodes plus length*depth random distractor
/// edges) connect nodes with independent labels, so message passing only
/// dilutes the signal and an input-to-output shortcut is the best route.
/// `depth` is the number of graph blocks the task is meant to probe.
SyntheticDataset generate_chain_task(std::size_t length, std::size_t depth, std::uint64_t seed);

}  // namespace gnasforge
