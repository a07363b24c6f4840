#include "gnasforge/micro_space.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "gnasforge/init.hpp"
#include "gnasforge/ops.hpp"

namespace gnasforge {
namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& s, const std::array<Enum, N>& all, const char* what) {
  for (Enum e : all)
    if (to_string(e) == s) return e;
  throw std::invalid_argument(std::string("unknown ") + what + " \"" + s + "\"");
}

template <typename T>
void require_unique(const std::vector<T>& v, const char* what) {
  if (v.empty()) throw std::invalid_argument(std::string("candidate list '") + what + "' is empty");
  std::set<T> seen(v.begin(), v.end());
  if (seen.size() != v.size()) {
    throw std::invalid_argument(std::string("candidate list '") + what + "' has duplicates");
  }
}

}  // namespace

std::string to_string(SubBlock k) {
  switch (k) {
    case SubBlock::Expansion: return "expansion";
    case SubBlock::Attention: return "attention";
    case SubBlock::Heads: return "heads";
    case SubBlock::Aggregate: return "aggregate";
    case SubBlock::Activation: return "activation";
  }
  return "?";
}

std::string to_string(AttentionKind k) {
  switch (k) {
    case AttentionKind::Const: return "Const";
    case AttentionKind::GCN: return "GCN";
    case AttentionKind::GAT: return "GAT";
    case AttentionKind::SymGAT: return "SymGAT";
    case AttentionKind::COS: return "COS";
    case AttentionKind::Linear: return "Linear";
    case AttentionKind::GeneLinear: return "GeneLinear";
  }
  return "?";
}

std::string to_string(Aggregator k) {
  switch (k) {
    case Aggregator::Sum: return "SUM";
    case Aggregator::Mean: return "MEAN";
    case Aggregator::Max: return "MAX";
  }
  return "?";
}

std::string to_string(Activation k) {
  switch (k) {
    case Activation::None: return "None";
    case Activation::Sigmoid: return "Sigmoid";
    case Activation::Tanh: return "Tanh";
    case Activation::Softplus: return "Softplus";
    case Activation::ReLU: return "ReLU";
    case Activation::LeakyReLU: return "LeakyReLU";
    case Activation::ReLU6: return "ReLU6";
    case Activation::ELU: return "ELU";
  }
  return "?";
}

AttentionKind parse_attention(const std::string& s) {
  return parse_enum(s, kAllAttentions, "attention kind");
}
Aggregator parse_aggregator(const std::string& s) {
  return parse_enum(s, kAllAggregators, "aggregator");
}
Activation parse_activation(const std::string& s) {
  return parse_enum(s, kAllActivations, "activation");
}

std::size_t CandidateLists::size(SubBlock k) const {
  switch (k) {
    case SubBlock::Expansion: return expansions.size();
    case SubBlock::Attention: return attentions.size();
    case SubBlock::Heads: return heads.size();
    case SubBlock::Aggregate: return aggregators.size();
    case SubBlock::Activation: return activations.size();
  }
  return 0;
}

void CandidateLists::validate(std::size_t out_dim) const {
  require_unique(expansions, "expansion");
  require_unique(attentions, "attention");
  require_unique(heads, "heads");
  require_unique(aggregators, "aggregate");
  require_unique(activations, "activation");
  for (int m : expansions)
    if (m < 1) throw std::invalid_argument("expansion multiplier must be positive");
  for (int h : heads) {
    if (h < 1 || out_dim % static_cast<std::size_t>(h) != 0) {
      throw std::invalid_argument("head count " + std::to_string(h) +
                                  " does not divide output dimension " + std::to_string(out_dim));
    }
  }
}

BlockChoice CandidateLists::choice(const std::array<std::size_t, kSubBlockCount>& idx) const {
  for (SubBlock k : kSubBlocks) {
    if (idx[static_cast<std::size_t>(k)] >= size(k)) {
      throw std::out_of_range("selection index " + std::to_string(idx[static_cast<std::size_t>(k)]) +
                              " out of range for sub-block " + to_string(k));
    }
  }
  return BlockChoice{expansions[idx[0]], attentions[idx[1]], heads[idx[2]], aggregators[idx[3]],
                     activations[idx[4]]};
}

CandidateLists CandidateLists::single(const BlockChoice& c) {
  return CandidateLists{{c.expansion}, {c.attention}, {c.heads}, {c.aggregate}, {c.activation}};
}

void BlockSpace::validate() const {
  if (in_dim == 0 || out_dim == 0) throw std::invalid_argument("block dimensions must be positive");
  candidates.validate(out_dim);
}

std::array<std::size_t, kSubBlockCount> Selection::indices() const {
  std::array<std::size_t, kSubBlockCount> out{};
  for (std::size_t k = 0; k < kSubBlockCount; ++k) out[k] = entries[k].index;
  return out;
}

SelectionEntry select_operator(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("select_operator: empty probability vector");
  std::size_t best = 0;
  for (std::size_t t = 1; t < probs.size(); ++t)
    if (probs[t] > probs[best]) best = t;
  return {best, probs[best]};
}

Var activation_apply(Activation kind, Var x) {
  switch (kind) {
    case Activation::None: return x;
    case Activation::Sigmoid: return ops::sigmoid(x);
    case Activation::Tanh: return ops::tanh(x);
    case Activation::Softplus: return ops::softplus(x);
    case Activation::ReLU: return ops::relu(x);
    case Activation::LeakyReLU: return ops::leaky_relu(x, ops::kActivationLeakySlope);
    case Activation::ReLU6: return ops::relu6(x);
    case Activation::ELU: return ops::elu(x);
  }
  throw std::invalid_argument("activation_apply: unknown activation");
}

Var transform_forward(Var x, Var w1, Var w2) {
  if (x.cols() != w1.rows() || w1.cols() != w2.rows()) {
    throw std::invalid_argument("transform_forward: input " + shape_string(x.shape()) +
                                " incompatible with W1 " + shape_string(w1.shape()) + " and W2 " +
                                shape_string(w2.shape()));
  }
  return ops::matmul(ops::relu(ops::matmul(x, w1)), w2);
}

std::vector<std::string> attention_roles(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::Const:
    case AttentionKind::GCN: return {};
    case AttentionKind::GAT:
    case AttentionKind::SymGAT: return {"a_dst", "a_src"};
    case AttentionKind::COS: return {"a1", "a2"};
    case AttentionKind::Linear: return {"a"};
    case AttentionKind::GeneLinear: return {"a1", "a2", "g"};
  }
  return {};
}

bool attention_is_normalised(AttentionKind kind) {
  return kind != AttentionKind::Const && kind != AttentionKind::GCN;
}

Var attention_raw(AttentionKind kind, Var h, const Graph& graph, const AttentionWeights& w) {
  Tape& tape = *h.tape();
  const auto& src = graph.edge_src();
  const auto& dst = graph.edge_dst();
  const std::size_t edges = graph.num_edges();
  if (h.rows() != graph.num_nodes()) {
    throw std::invalid_argument("attention: features have " + std::to_string(h.rows()) +
                                " rows for a graph of " + std::to_string(graph.num_nodes()) +
                                " nodes");
  }
  switch (kind) {
    case AttentionKind::Const:
      return tape.constant(Tensor::matrix(edges, 1, 1.0));
    case AttentionKind::GCN:
      return tape.constant(Tensor(Shape{edges, 1}, graph.gcn_norm()));
    case AttentionKind::GAT:
    case AttentionKind::SymGAT: {
      const Var score_dst = ops::row_sum(ops::mul(h, w.a_dst));
      const Var score_src = ops::row_sum(ops::mul(h, w.a_src));
      const Var forward = ops::leaky_relu(
          ops::add(ops::gather_rows(score_dst, dst), ops::gather_rows(score_src, src)),
          ops::kAttentionLeakySlope);
      if (kind == AttentionKind::GAT) return forward;
      const Var reverse = ops::leaky_relu(
          ops::add(ops::gather_rows(score_dst, src), ops::gather_rows(score_src, dst)),
          ops::kAttentionLeakySlope);
      return ops::add(forward, reverse);
    }
    case AttentionKind::COS: {
      const Var left = ops::gather_rows(ops::mul(h, w.a1), dst);
      const Var right = ops::gather_rows(ops::mul(h, w.a2), src);
      return ops::row_sum(ops::mul(left, right));
    }
    case AttentionKind::Linear: {
      const Var score = ops::row_sum(ops::mul(h, w.a));
      const Var per_node =
          ops::tanh(ops::segment_sum(ops::gather_rows(score, src), dst, graph.num_nodes()));
      return ops::gather_rows(per_node, dst);
    }
    case AttentionKind::GeneLinear: {
      const Var left = ops::gather_rows(ops::mul(h, w.a1), dst);
      const Var right = ops::gather_rows(ops::mul(h, w.a2), src);
      return ops::row_sum(ops::mul(ops::tanh(ops::add(left, right)), w.g));
    }
  }
  throw std::invalid_argument("attention: unknown kind");
}

Var neighbourhood_softmax(Var scores, const Graph& graph) {
  const auto& dst = graph.edge_dst();
  const std::size_t n = graph.num_nodes();
  const Var shift = ops::detach(ops::segment_max(scores, dst, n));
  const Var ex = ops::exp(ops::sub(scores, ops::gather_rows(shift, dst)));
  const Var denom = ops::segment_sum(ex, dst, n);
  return ops::div(ex, ops::gather_rows(denom, dst));
}

Var attention_coefficients(AttentionKind kind, Var h, const Graph& graph,
                           const AttentionWeights& w) {
  const Var raw = attention_raw(kind, h, graph, w);
  return attention_is_normalised(kind) ? neighbourhood_softmax(raw, graph) : raw;
}

Var aggregate_messages(Aggregator kind, Var messages, const Graph& graph) {
  switch (kind) {
    case Aggregator::Sum: return ops::segment_sum(messages, graph.edge_dst(), graph.num_nodes());
    case Aggregator::Mean: return ops::segment_mean(messages, graph.edge_dst(), graph.num_nodes());
    case Aggregator::Max: return ops::segment_max(messages, graph.edge_dst(), graph.num_nodes());
  }
  throw std::invalid_argument("aggregate: unknown aggregator");
}

namespace {

Var scaled(Var v, const std::optional<Var>& factor) {
  return factor ? ops::mul(v, *factor) : v;
}

}  // namespace

Var graph_block(const Graph& graph, Var x, const BlockChoice& choice, const BlockWeights& weights,
                const SubBlockScales& scales) {
  const Var transformed =
      scaled(transform_forward(x, weights.w1, weights.w2), scales[SubBlock::Expansion]);
  const std::size_t out_dim = transformed.cols();
  const auto heads = static_cast<std::size_t>(choice.heads);
  if (heads == 0 || out_dim % heads != 0 || weights.heads.size() != heads) {
    throw std::invalid_argument("graph_block: " + std::to_string(heads) +
                                " heads incompatible with output width " + std::to_string(out_dim));
  }
  const std::size_t head_dim = out_dim / heads;
  std::vector<Var> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const Var h = heads == 1 ? transformed
                             : ops::slice_cols(transformed, hd * head_dim, (hd + 1) * head_dim);
    const Var coef = scaled(attention_coefficients(choice.attention, h, graph, weights.heads[hd]),
                            scales[SubBlock::Attention]);
    const Var messages = ops::mul(ops::gather_rows(h, graph.edge_src()), coef);
    const Var aggregated =
        scaled(aggregate_messages(choice.aggregate, messages, graph), scales[SubBlock::Aggregate]);
    head_outputs.push_back(ops::add(aggregated, h));
  }
  const Var combined =
      scaled(heads == 1 ? head_outputs.front() : ops::concat_cols(head_outputs),
             scales[SubBlock::Heads]);
  return scaled(activation_apply(choice.activation, combined), scales[SubBlock::Activation]);
}

BlockParams::BlockParams(BlockSpace space, std::string prefix)
    : space_(std::move(space)), prefix_(std::move(prefix)) {
  space_.validate();
}

std::string BlockParams::transform_name(int expansion, const std::string& which) const {
  return prefix_ + "/transform/x" + std::to_string(expansion) + "/" + which;
}

std::string BlockParams::attention_name(AttentionKind kind, int heads,
                                        const std::string& role) const {
  return prefix_ + "/attention/" + to_string(kind) + "/h" + std::to_string(heads) + "/" + role;
}

void BlockParams::register_params(ParameterStore& store, Rng& rng) const {
  const std::size_t din = space_.in_dim, dout = space_.out_dim;
  for (int m : space_.candidates.expansions) {
    const std::size_t dexp = din * static_cast<std::size_t>(m);
    store.add(transform_name(m, "w1"), glorot_uniform(din, dexp, rng));
    store.add(transform_name(m, "w2"), glorot_uniform(dexp, dout, rng));
  }
  for (AttentionKind kind : space_.candidates.attentions) {
    const auto roles = attention_roles(kind);
    for (int h : space_.candidates.heads) {
      const std::size_t head_dim = dout / static_cast<std::size_t>(h);
      // W_a over (h_i || h_j) has fan-in 2*head_dim; the other roles head_dim.
      const bool split = kind == AttentionKind::GAT || kind == AttentionKind::SymGAT;
      for (const auto& role : roles) {
        store.add(attention_name(kind, h, role),
                  glorot_uniform(static_cast<std::size_t>(h), head_dim,
                                 split ? 2 * head_dim : head_dim, 1, rng));
      }
    }
  }
}

std::vector<std::string> BlockParams::parameter_names(const BlockChoice& c) const {
  std::vector<std::string> names{transform_name(c.expansion, "w1"),
                                 transform_name(c.expansion, "w2")};
  for (const auto& role : attention_roles(c.attention))
    names.push_back(attention_name(c.attention, c.heads, role));
  return names;
}

std::vector<std::string> BlockParams::parameter_names() const {
  std::vector<std::string> names;
  for (int m : space_.candidates.expansions) {
    names.push_back(transform_name(m, "w1"));
    names.push_back(transform_name(m, "w2"));
  }
  for (AttentionKind kind : space_.candidates.attentions)
    for (int h : space_.candidates.heads)
      for (const auto& role : attention_roles(kind)) names.push_back(attention_name(kind, h, role));
  return names;
}

BlockWeights BlockParams::bind(Tape& tape, const ParameterStore& store,
                               const BlockChoice& c) const {
  BlockWeights w;
  w.w1 = tape.param(store, transform_name(c.expansion, "w1"));
  w.w2 = tape.param(store, transform_name(c.expansion, "w2"));
  const auto heads = static_cast<std::size_t>(c.heads);
  w.heads.resize(heads);
  for (const auto& role : attention_roles(c.attention)) {
    const Var all = tape.param(store, attention_name(c.attention, c.heads, role));
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::size_t row[] = {hd};
      const Var v = heads == 1 ? all : ops::gather_rows(all, row);
      AttentionWeights& aw = w.heads[hd];
      if (role == "a_dst") aw.a_dst = v;
      else if (role == "a_src") aw.a_src = v;
      else if (role == "a1") aw.a1 = v;
      else if (role == "a2") aw.a2 = v;
      else if (role == "a") aw.a = v;
      else if (role == "g") aw.g = v;
    }
  }
  return w;
}

Var block_forward(const Graph& graph, Var x, const Selection& selection, const BlockParams& params,
                  const ParameterStore& store, ScaleMode mode,
                  const SubBlockScales& probability_vars) {
  const BlockSpace& space = params.space();
  if (x.cols() != space.in_dim || x.rows() != graph.num_nodes()) {
    throw std::invalid_argument("block_forward: block " + std::to_string(space.layer) +
                                " expects input [" + std::to_string(graph.num_nodes()) + "x" +
                                std::to_string(space.in_dim) + "], got " +
                                shape_string(x.shape()));
  }
  const BlockChoice choice = space.candidates.choice(selection.indices());
  Tape& tape = *x.tape();
  const BlockWeights weights = params.bind(tape, store, choice);
  SubBlockScales scales;
  if (mode == ScaleMode::Attached) {
    for (SubBlock k : kSubBlocks) {
      scales[k] = probability_vars[k] ? *probability_vars[k]
                                      : tape.constant(Tensor::scalar(selection[k].value));
    }
  }
  return graph_block(graph, x, choice, weights, scales);
}

}  // namespace gnasforge
