#pragma once

// The per-layer operator superset ("graph block") and single-path selection.
//
// A graph block computes, per attention head,
//   m_j = F(h_j)                         F(x) = relu(x W1) W2
//   e_i = AGGREGATE_{j in N(i)} a_ij m_j
//   h_i = e_i + F(h_i)                   (COMBINE = ADD)
// concatenates the heads and applies the activation. F's output columns are
// split evenly between heads; each head owns its attention parameters.
//
// Attention coefficients follow the raw formulas per kind. GAT, SymGAT, COS,
// Linear and GeneLinear are then softmax-normalised over each node's
// in-neighbourhood; Const and GCN are used as-is. This normalisation rule is
// an interpretation: the raw formulas alone leave it open.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gnasforge/graph.hpp"
#include "gnasforge/params.hpp"
#include "gnasforge/rng.hpp"
#include "gnasforge/tape.hpp"

namespace gnasforge {

enum class SubBlock : std::size_t { Expansion = 0, Attention, Heads, Aggregate, Activation };
inline constexpr std::size_t kSubBlockCount = 5;
inline constexpr std::array<SubBlock, kSubBlockCount> kSubBlocks{
    SubBlock::Expansion, SubBlock::Attention, SubBlock::Heads, SubBlock::Aggregate,
    SubBlock::Activation};

enum class AttentionKind { Const, GCN, GAT, SymGAT, COS, Linear, GeneLinear };
enum class Aggregator { Sum, Mean, Max };
enum class Activation { None, Sigmoid, Tanh, Softplus, ReLU, LeakyReLU, ReLU6, ELU };

inline constexpr std::array<AttentionKind, 7> kAllAttentions{
    AttentionKind::Const, AttentionKind::GCN,    AttentionKind::GAT,       AttentionKind::SymGAT,
    AttentionKind::COS,   AttentionKind::Linear, AttentionKind::GeneLinear};
inline constexpr std::array<Aggregator, 3> kAllAggregators{Aggregator::Sum, Aggregator::Mean,
                                                           Aggregator::Max};
inline constexpr std::array<Activation, 8> kAllActivations{
    Activation::None, Activation::Sigmoid,   Activation::Tanh,  Activation::Softplus,
    Activation::ReLU, Activation::LeakyReLU, Activation::ReLU6, Activation::ELU};

std::string to_string(SubBlock k);
std::string to_string(AttentionKind k);
std::string to_string(Aggregator k);
std::string to_string(Activation k);
AttentionKind parse_attention(const std::string& s);
Aggregator parse_aggregator(const std::string& s);
Activation parse_activation(const std::string& s);

/// One concrete operator per sub-block.
struct BlockChoice {
  int expansion = 1;
  AttentionKind attention = AttentionKind::GCN;
  int heads = 1;
  Aggregator aggregate = Aggregator::Sum;
  Activation activation = Activation::ReLU;

  friend bool operator==(const BlockChoice&, const BlockChoice&) = default;
};

struct CandidateLists {
  std::vector<int> expansions{1, 2, 4, 8};
  std::vector<AttentionKind> attentions{kAllAttentions.begin(), kAllAttentions.end()};
  std::vector<int> heads{1, 2, 4, 8, 16};
  std::vector<Aggregator> aggregators{kAllAggregators.begin(), kAllAggregators.end()};
  std::vector<Activation> activations{kAllActivations.begin(), kAllActivations.end()};

  std::size_t size(SubBlock k) const;
  /// Throws unless every list is non-empty and free of duplicates and every
  /// head count divides `out_dim`.
  void validate(std::size_t out_dim) const;
  BlockChoice choice(const std::array<std::size_t, kSubBlockCount>& index) const;
  /// Candidate lists holding exactly one operator.
  static CandidateLists single(const BlockChoice& c);

  friend bool operator==(const CandidateLists&, const CandidateLists&) = default;
};

struct BlockSpace {
  std::size_t layer = 0;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  CandidateLists candidates;

  void validate() const;
};

struct SelectionEntry {
  std::size_t index = 0;
  double value = 1.0;
};

/// Chosen candidate per sub-block plus the probability that chose it.
struct Selection {
  std::array<SelectionEntry, kSubBlockCount> entries{};

  SelectionEntry& operator[](SubBlock k) { return entries[static_cast<std::size_t>(k)]; }
  const SelectionEntry& operator[](SubBlock k) const {
    return entries[static_cast<std::size_t>(k)];
  }
  std::array<std::size_t, kSubBlockCount> indices() const;
};

/// argmax with ties resolved to the lowest index.
SelectionEntry select_operator(std::span<const double> probs);

/// Elementwise activation candidate. LeakyReLU uses slope 0.01 here; the
/// attention LeakyReLU uses 0.2.
Var activation_apply(Activation kind, Var x);

/// relu(x W1) W2 with W1: [D_I, D_E], W2: [D_E, D_O].
Var transform_forward(Var x, Var w1, Var w2);

/// Per-head attention parameters, each a [1, head_dim] row. Unused roles stay
/// unbound.
struct AttentionWeights {
  Var a_dst, a_src;  // GAT, SymGAT: W_a split over (h_i || h_j)
  Var a1, a2;        // COS, GeneLinear
  Var a;             // Linear
  Var g;             // GeneLinear output projection
};

/// Parameter roles a kind needs, in registration order.
std::vector<std::string> attention_roles(AttentionKind kind);
bool attention_is_normalised(AttentionKind kind);

/// Raw per-edge coefficients [E, 1] for head features h [N, head_dim].
Var attention_raw(AttentionKind kind, Var h, const Graph& graph, const AttentionWeights& w);
/// Raw coefficients, softmax-normalised over in-neighbourhoods for the
/// learned kinds.
Var attention_coefficients(AttentionKind kind, Var h, const Graph& graph,
                           const AttentionWeights& w);
/// Softmax of per-edge scores [E, 1] over edges sharing a destination.
Var neighbourhood_softmax(Var scores, const Graph& graph);

/// Aggregates per-edge messages [E, d] into destination rows [N, d].
Var aggregate_messages(Aggregator kind, Var messages, const Graph& graph);

struct BlockWeights {
  Var w1, w2;
  std::vector<AttentionWeights> heads;
};

/// Multiplier per sub-block output; unset entries are the detached factor 1.
struct SubBlockScales {
  std::array<std::optional<Var>, kSubBlockCount> factor;

  std::optional<Var>& operator[](SubBlock k) { return factor[static_cast<std::size_t>(k)]; }
  const std::optional<Var>& operator[](SubBlock k) const {
    return factor[static_cast<std::size_t>(k)];
  }
};

/// One graph block with a fixed operator choice.
Var graph_block(const Graph& graph, Var x, const BlockChoice& choice, const BlockWeights& weights,
                const SubBlockScales& scales = {});

/// Weights of every candidate operator of one block, registered under
/// `prefix` in a ParameterStore. Candidates never share parameters.
class BlockParams {
 public:
  BlockParams(BlockSpace space, std::string prefix);

  const BlockSpace& space() const { return space_; }
  const std::string& prefix() const { return prefix_; }

  /// Glorot-initialised weights for all candidates; no biases.
  void register_params(ParameterStore& store, Rng& rng) const;
  std::vector<std::string> parameter_names() const;
  std::vector<std::string> parameter_names(const BlockChoice& choice) const;

  std::string transform_name(int expansion, const std::string& which) const;
  std::string attention_name(AttentionKind kind, int heads, const std::string& role) const;

  /// Binds the weights of `choice` onto `tape`.
  BlockWeights bind(Tape& tape, const ParameterStore& store, const BlockChoice& choice) const;

 private:
  BlockSpace space_;
  std::string prefix_;
};

enum class ScaleMode {
  Detached,  // every factor is 1 (weight-training steps)
  Attached   // each sub-block output is multiplied by its selection probability
};

/// Supernet forward of one block: evaluates only the selected operators.
/// In Attached mode, `probability_vars` (when given) supplies the
/// differentiable factors, otherwise the selection values enter as
/// constants.
Var block_forward(const Graph& graph, Var x, const Selection& selection, const BlockParams& params,
                  const ParameterStore& store, ScaleMode mode,
                  const SubBlockScales& probability_vars = {});

}  // namespace gnasforge
