#include "gnasforge/gradcheck_suite.hpp"

#include <functional>
#include <stdexcept>

#include "gnasforge/controller.hpp"
#include "gnasforge/gradcheck.hpp"
#include "gnasforge/macro_router.hpp"
#include "gnasforge/micro_space.hpp"
#include "gnasforge/network.hpp"
#include "gnasforge/ops.hpp"

namespace gnasforge {
namespace {

constexpr std::size_t kNodes = 6;
constexpr std::size_t kBlockOut = 16;
constexpr int kMaxDraws = 8;

using Instance = std::function<GradCheckResult(Rng&)>;

struct Check {
  std::string group;
  std::string name;
  Instance run;
};

Tensor randn(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

Tensor randu(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Fixed random projection so every scalar loss sees all output entries.
Var projected(Var out) {
  Rng rng(0xC0FFEE + 131 * out.rows() + out.cols());
  Tensor w = randu(out.rows(), out.cols(), rng, -1.0, 1.0);
  return ops::sum(ops::mul(out, out.tape()->constant(std::move(w))));
}

GradCheckResult check(ParameterStore& store, const ScalarOfParams& f, std::size_t coords = 0) {
  return parameter_gradient_check(f, store, kGradcheckStep, coords);
}

void merge(GradCheckResult& into, const GradCheckResult& r) {
  if (r.max_rel_error > into.max_rel_error) {
    into.max_rel_error = r.max_rel_error;
    into.worst = r.worst;
  }
  into.coordinates += r.coordinates;
  into.kinks += r.kinks;
}

// ---- primitives ----

Check unary(const std::string& name, std::function<Var(Var)> op, double lo = -2.0, double hi = 2.0) {
  return {"primitives", name, [op, lo, hi](Rng& rng) {
            ParameterStore s;
            s.add("a", randu(4, 3, rng, lo, hi));
            return check(s, [&](Tape& t) { return projected(op(t.param(s, "a"))); });
          }};
}

Check binary(const std::string& name, std::function<Var(Var, Var)> op, Shape a, Shape b,
             double lo_b = -2.0, double hi_b = 2.0) {
  return {"primitives", name, [op, a, b, lo_b, hi_b](Rng& rng) {
            ParameterStore s;
            s.add("a", randu(a[0], a[1], rng, -2.0, 2.0));
            s.add("b", randu(b[0], b[1], rng, lo_b, hi_b));
            return check(s, [&](Tape& t) { return projected(op(t.param(s, "a"), t.param(s, "b"))); });
          }};
}

Check segment(const std::string& name,
              Var (*op)(Var, std::span<const std::size_t>, std::size_t)) {
  return {"primitives", name, [op](Rng& rng) {
            ParameterStore s;
            s.add("v", randn(8, 3, rng));
            std::vector<std::size_t> seg(8);
            for (auto& x : seg) x = rng.below(4);  // segment 4 stays empty
            return check(s, [&](Tape& t) { return projected(op(t.param(s, "v"), seg, 5)); });
          }};
}

void add_primitives(std::vector<Check>& out) {
  out.push_back(binary("matmul", ops::matmul, {4, 3}, {3, 5}));
  out.push_back(binary("add", ops::add, {4, 3}, {1, 3}));
  out.push_back(binary("sub", ops::sub, {4, 3}, {4, 1}));
  out.push_back(binary("mul", ops::mul, {4, 3}, {1, 1}));
  out.push_back(binary("div", ops::div, {4, 3}, {4, 3}, 0.5, 2.0));
  out.push_back(unary("scale", [](Var a) { return ops::scale(a, -1.7); }));
  out.push_back(binary("concat_cols", [](Var a, Var b) { return ops::concat_cols({a, b, a}); },
                       {4, 3}, {4, 2}));
  out.push_back(unary("slice_cols", [](Var a) { return ops::slice_cols(a, 1, 3); }));
  out.push_back(unary("softmax_rows", ops::softmax_rows));
  out.push_back(unary("log_softmax_rows", ops::log_softmax_rows));
  out.push_back(unary("log", ops::log, 0.5, 2.0));
  out.push_back(unary("exp", ops::exp));
  out.push_back(unary("gather_rows", [](Var a) {
    static const std::size_t idx[] = {3, 0, 3, 1};
    return ops::gather_rows(a, idx);
  }));
  out.push_back(segment("segment_sum", ops::segment_sum));
  out.push_back(segment("segment_mean", ops::segment_mean));
  out.push_back(segment("segment_max", ops::segment_max));
  out.push_back(unary("sum", ops::sum));
  out.push_back(unary("mean", ops::mean));
  out.push_back(unary("row_sum", ops::row_sum));
  out.push_back(unary("broadcast_rows", [](Var a) {
    return ops::broadcast_rows(ops::slice_cols(ops::gather_rows(a, std::vector<std::size_t>{2}), 0, 3), 5);
  }));
}

// ---- graph operators ----

void add_activations(std::vector<Check>& out) {
  for (Activation kind : kAllActivations) {
    out.push_back({"activations", "activation/" + to_string(kind), [kind](Rng& rng) {
                     ParameterStore s;
                     s.add("x", randu(kNodes, 4, rng, -7.0, 7.0));
                     return check(s, [&](Tape& t) { return projected(activation_apply(kind, t.param(s, "x"))); });
                   }});
  }
}

AttentionWeights bind_attention(Tape& t, const ParameterStore& s, AttentionKind kind) {
  AttentionWeights w;
  for (const std::string& role : attention_roles(kind)) {
    const Var v = t.param(s, role);
    if (role == "a_dst") w.a_dst = v;
    else if (role == "a_src") w.a_src = v;
    else if (role == "a1") w.a1 = v;
    else if (role == "a2") w.a2 = v;
    else if (role == "a") w.a = v;
    else if (role == "g") w.g = v;
  }
  return w;
}

void add_attentions(std::vector<Check>& out) {
  for (AttentionKind kind : kAllAttentions) {
    out.push_back({"attentions", "attention/" + to_string(kind), [kind](Rng& rng) {
                     const Graph g = random_check_graph(rng, kNodes, 3);
                     ParameterStore s;
                     s.add("h", randn(kNodes, 4, rng));
                     for (const std::string& role : attention_roles(kind)) s.add(role, randn(1, 4, rng, 0.7));
                     return check(s, [&](Tape& t) {
                       const Var h = t.param(s, "h");
                       const AttentionWeights w = bind_attention(t, s, kind);
                       return ops::add(projected(attention_raw(kind, h, g, w)),
                                       projected(attention_coefficients(kind, h, g, w)));
                     });
                   }});
  }
}

void add_aggregators(std::vector<Check>& out) {
  for (Aggregator kind : kAllAggregators) {
    out.push_back({"aggregators", "aggregate/" + to_string(kind), [kind](Rng& rng) {
                     const Graph g = random_check_graph(rng, kNodes, 3);
                     ParameterStore s;
                     s.add("m", randn(g.num_edges(), 3, rng));
                     return check(s, [&](Tape& t) { return projected(aggregate_messages(kind, t.param(s, "m"), g)); });
                   }});
  }
}

void add_blocks(std::vector<Check>& out) {
  constexpr int kExpansions[] = {1, 2};
  constexpr int kHeads[] = {1, 2, 4};
  std::size_t combo = 0;
  for (AttentionKind att : kAllAttentions) {
    for (Aggregator agg : kAllAggregators) {
      for (Activation act : kAllActivations) {
        BlockChoice c{kExpansions[combo % 2], att, kHeads[(combo / 2) % 3], agg, act};
        ++combo;
        const std::string name = "block/" + to_string(att) + "-" + to_string(agg) + "-" + to_string(act) +
                                 "-x" + std::to_string(c.expansion) + "-h" + std::to_string(c.heads);
        out.push_back({"block", name, [c](Rng& rng) {
                         const Graph g = random_check_graph(rng, kNodes, 5);
                         const BlockParams bp(BlockSpace{0, 5, kBlockOut, CandidateLists::single(c)}, "b");
                         ParameterStore s;
                         s.add("x", randn(kNodes, 5, rng));
                         bp.register_params(s, rng);
                         return check(s, [&](Tape& t) {
                           return projected(graph_block(g, t.param(s, "x"), c, bp.bind(t, s, c)));
                         }, 24);
                       }});
      }
    }
  }
}

void add_block_forward(std::vector<Check>& out) {
  for (int k = 0; k < 5; ++k) {
    out.push_back({"block_forward", "block_forward/" + std::to_string(k), [](Rng& rng) {
                     const Graph g = random_check_graph(rng, kNodes, 5);
                     const BlockParams bp(BlockSpace{0, 5, kBlockOut, CandidateLists{}}, "b");
                     ParameterStore s;
                     s.add("x", randn(kNodes, 5, rng));
                     bp.register_params(s, rng);
                     Selection sel;
                     for (SubBlock sb : kSubBlocks) {
                       sel[sb].index = rng.below(bp.space().candidates.size(sb));
                       s.add("scale/" + to_string(sb), Tensor::scalar(rng.uniform(0.2, 1.0)));
                     }
                     return check(s, [&](Tape& t) {
                       SubBlockScales sc;
                       for (SubBlock sb : kSubBlocks) sc[sb] = t.param(s, "scale/" + to_string(sb));
                       return projected(block_forward(g, t.param(s, "x"), sel, bp, s, ScaleMode::Attached, sc));
                     }, 16);
                   }});
  }
}

void add_route(std::vector<Check>& out) {
  for (GateMode mode : {GateMode::Sampled, GateMode::Deterministic}) {
    const std::string name = mode == GateMode::Sampled ? "route/sampled" : "route/deterministic";
    out.push_back({"route", name, [mode](Rng& rng) {
                     Router router({5, 8, 8}, 8);
                     ParameterStore s;
                     router.register_priors(s);
                     s.value(router.theta_name()) = randn(3, 3, rng);
                     router.register_shortcuts(s, rng);
                     for (std::size_t i = 0; i < 3; ++i) {
                       s.add("in" + std::to_string(i), randn(kNodes, i == 0 ? 5 : 8, rng));
                       s.add("out" + std::to_string(i), randn(kNodes, 8, rng));
                     }
                     const Tensor draws = router.sample_gumbel(rng);  // frozen across evaluations
                     return check(s, [&](Tape& t) {
                       std::vector<Var> in, raw;
                       for (std::size_t i = 0; i < 3; ++i) {
                         in.push_back(t.param(s, "in" + std::to_string(i)));
                         raw.push_back(t.param(s, "out" + std::to_string(i)));
                       }
                       const Gates gates = mode == GateMode::Sampled
                                               ? router.sampled_gates(t, s, 0.7, draws)
                                               : router.deterministic_gates(t, s, 0.7);
                       Var loss = t.constant(Tensor::scalar(0.0));
                       for (const Var& o : router.route(in, raw, gates, s)) loss = ops::add(loss, projected(o));
                       return loss;
                     });
                   }});
  }
}

void add_controller(std::vector<Check>& out) {
  out.push_back({"controller", "controller", [](Rng& rng) {
                   const ControllerLayout layout{{CandidateLists{}, CandidateLists{}}};
                   const Controller c(layout);
                   ParameterStore s;
                   c.register_params(s, rng);
                   // Larger prior than the search init so the check exercises
                   // non-uniform probabilities.
                   s.value(c.prior_name()) = randn(1, kControllerWidth, rng);
                   const ProbabilityTensor noise = sample_exploration_noise(layout, rng);
                   return check(s, [&](Tape& t) {
                     const ProbabilityVars p = add_noise(c.forward(t, s), 0.5, noise);
                     Var loss = t.constant(Tensor::scalar(0.0));
                     for (const auto& layer : p)
                       for (const Var& v : layer) loss = ops::add(loss, projected(v));
                     return loss;
                   }, 16);
                 }});
}

void add_supernet(std::vector<Check>& out) {
  out.push_back({"supernet", "supernet", [](Rng& rng) {
                   const Graph g = random_check_graph(rng, kNodes, 5, 3);
                   SearchSpace space{2, kBlockOut, 5, 3, CandidateLists{}, true};
                   Supernet net(space, rng.next());
                   net.micro().value(net.controller().prior_name()) = randn(1, kControllerWidth, rng);
                   const ControllerLayout& layout = net.controller().layout();
                   const ProbabilityTensor noise = sample_exploration_noise(layout, rng);
                   const double tau = 0.6;
                   OperatorIndex index(layout.num_layers());
                   for (std::size_t i = 0; i < index.size(); ++i)
                     for (std::size_t k = 0; k < kSubBlockCount; ++k)
                       index[i][k] = rng.below(layout.length(i, kSubBlocks[k]));
                   const Tensor draws = net.router().sample_gumbel(rng);
                   std::vector<std::size_t> all(kNodes);
                   for (std::size_t n = 0; n < kNodes; ++n) all[n] = n;
                   const NodeLabels labels = labels_of(g);
                   const ScalarOfParams f = [&](Tape& t) {
                     const ProbabilityVars p = add_noise(net.controller().forward(t, net.micro()), tau, noise);
                     const ProbabilityTensor pv = values_of(p);
                     std::vector<Selection> sel;
                     std::vector<SubBlockScales> scales(index.size());
                     for (std::size_t i = 0; i < index.size(); ++i) {
                       sel.push_back(selection_for_layer(pv, index, i));
                       for (std::size_t k = 0; k < kSubBlockCount; ++k)
                         scales[i].factor[k] = ops::slice_cols(p[i][k], index[i][k], index[i][k] + 1);
                     }
                     const Gates gates = net.router().sampled_gates(t, net.macro(), tau, draws);
                     return compute_loss(net.forward(t, g, sel, ScaleMode::Attached, &scales, &gates), labels, all);
                   };
                   GradCheckResult r = check(net.weights(), f, 8);
                   merge(r, check(net.micro(), f, 8));
                   merge(r, check(net.macro(), f));
                   return r;
                 }});
}

const std::vector<Check>& registry() {
  static const std::vector<Check> checks = [] {
    std::vector<Check> c;
    add_primitives(c);
    add_activations(c);
    add_attentions(c);
    add_aggregators(c);
    add_blocks(c);
    add_block_forward(c);
    add_route(c);
    add_controller(c);
    add_supernet(c);
    return c;
  }();
  return checks;
}

}  // namespace

Graph random_check_graph(Rng& rng, std::size_t nodes, std::size_t feature_dim, std::size_t classes) {
  GraphInput in;
  in.num_nodes = nodes;
  in.num_classes = classes;
  in.features = randn(nodes, feature_dim, rng);
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t j = i + 1; j < nodes; ++j)
      if (rng.uniform() < 0.4) in.edges.emplace_back(i, j);
  for (std::size_t i = 0; i < nodes; ++i) in.labels.push_back(rng.below(classes));
  return Graph::build(in);
}

std::vector<std::string> gradcheck_groups() {
  return {"primitives", "activations", "attentions", "aggregators", "block",
          "block_forward", "route", "controller", "supernet"};
}

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> out;
  for (const Check& c : registry()) out.push_back(c.name);
  return out;
}

std::vector<GradcheckEntry> run_gradcheck(const std::string& selector, std::uint64_t seed) {
  std::vector<GradcheckEntry> out;
  const auto& checks = registry();
  for (std::size_t n = 0; n < checks.size(); ++n) {
    const Check& c = checks[n];
    if (selector != "all" && selector != c.group && selector != c.name) continue;
    GradcheckEntry e{c.group, c.name};
    for (int draw = 0; draw < kMaxDraws; ++draw) {
      Rng rng(seed * 1000003ULL + n * 7919ULL + static_cast<std::uint64_t>(draw));
      const GradCheckResult r = c.run(rng);
      e.max_rel_error = r.max_rel_error;
      e.coordinates = r.coordinates;
      e.kinks = r.kinks;
      if (r.kinks == 0) break;
      ++e.redraws;
    }
    out.push_back(e);
  }
  if (out.empty()) {
    throw std::invalid_argument("gradcheck: unknown operator \"" + selector +
                                "\" (use all, a group name, or an entry name)");
  }
  return out;
}

}  // namespace gnasforge
