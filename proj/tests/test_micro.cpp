#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gnasforge/gradcheck_suite.hpp"
#include "gnasforge/init.hpp"
#include "gnasforge/micro_space.hpp"
#include "gnasforge/network.hpp"
#include "gnasforge/ops.hpp"

using namespace gnasforge;

namespace {

Graph make_graph(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges, Tensor x) {
  GraphInput in;
  in.num_nodes = n;
  in.features = std::move(x);
  in.edges = std::move(edges);
  in.labels.assign(n, 0);
  return Graph::build(in);
}

std::size_t edge_index(const Graph& g, std::size_t src, std::size_t dst) {
  for (std::size_t e = 0; e < g.num_edges(); ++e)
    if (g.edge_src()[e] == src && g.edge_dst()[e] == dst) return e;
  throw std::logic_error("no such edge");
}

BlockWeights identity_weights(Tape& t, std::size_t d) {
  Tensor eye = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) eye(i, i) = 1.0;
  return BlockWeights{t.constant(eye), t.constant(eye), {AttentionWeights{}}};
}

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c) {
  Tensor out = Tensor::matrix(r, c);
  for (double& v : out.data()) v = rng.normal();
  return out;
}

}  // namespace

TEST_SUITE("micro_space") {

TEST_CASE("activation closed forms") {
  Tape t;
  auto at = [&](Activation k, double x) {
    return activation_apply(k, t.constant(Tensor::scalar(x))).value().item();
  };
  CHECK(at(Activation::ReLU6, 7.0) == 6.0);
  CHECK(at(Activation::ELU, 0.0) == 0.0);
  CHECK(at(Activation::ELU, -std::log(2.0)) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(at(Activation::LeakyReLU, -1.0) == doctest::Approx(-0.01).epsilon(1e-15));

  const double x = 0.5;
  const std::array<double, 8> expect{x,
                                     1.0 / (1.0 + std::exp(-x)),
                                     std::tanh(x),
                                     std::log1p(std::exp(x)),
                                     x,
                                     x,
                                     x,
                                     x};
  for (std::size_t k = 0; k < kAllActivations.size(); ++k) {
    CAPTURE(to_string(kAllActivations[k]));
    CHECK(at(kAllActivations[k], x) == doctest::Approx(expect[k]).epsilon(1e-14));
  }
}

TEST_CASE("names round-trip through parse") {
  for (auto a : kAllAttentions) CHECK(parse_attention(to_string(a)) == a);
  for (auto a : kAllAggregators) CHECK(parse_aggregator(to_string(a)) == a);
  for (auto a : kAllActivations) CHECK(parse_activation(to_string(a)) == a);
  CHECK_THROWS(parse_attention("Transformer"));
}

TEST_CASE("select_operator examples") {
  const std::vector<double> a{0.1, 0.7, 0.2}, b{0.5, 0.5}, c{0, 0, 1, 0};
  CHECK(select_operator(a).index == 1);
  CHECK(select_operator(a).value == 0.7);
  CHECK(select_operator(b).index == 0);
  CHECK(select_operator(c).index == 2);
  CHECK(select_operator(c).value == 1.0);
  CHECK_THROWS(select_operator(std::span<const double>{}));
}

TEST_CASE("transform_forward examples") {
  Tape t;
  const Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
  const Tensor x = Tensor::from_rows({{0.5, 2}, {3, 0}});
  CHECK(transform_forward(t.constant(x), t.constant(eye), t.constant(eye)).value() == x);
  const Tensor zero = Tensor::matrix(2, 2);
  const Tensor w1 = Tensor::from_rows({{1, -2}, {3, 1}}), w2 = Tensor::from_rows({{2, 0}, {-1, 1}});
  CHECK(transform_forward(t.constant(zero), t.constant(w1), t.constant(w2)).value() == zero);
  // x W1 = [[1,-2],[-4,1]] -> relu [[1,0],[0,1]] -> W2 = [[2,0],[-1,1]]
  const Tensor y = transform_forward(t.constant(Tensor::from_rows({{1, 0}, {-1, -1}})), t.constant(w1),
                                     t.constant(w2)).value();
  CHECK(y == Tensor::from_rows({{2, 0}, {-1, 1}}));
  CHECK_THROWS_AS(transform_forward(t.constant(Tensor::matrix(2, 3)), t.constant(w1), t.constant(w2)),
                  std::invalid_argument);
}

TEST_CASE("Const and GCN coefficients") {
  // Node 0 linked to 1, 2, 3: degree 4 with self-loop; the leaves link to each other too.
  const Graph g = make_graph(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {2, 3}, {1, 3}}, Tensor::matrix(4, 2, 1.0));
  Tape t;
  const Var h = t.constant(g.features());
  const Tensor c = attention_coefficients(AttentionKind::Const, h, g, {}).value();
  CHECK(std::all_of(c.data().begin(), c.data().end(), [](double v) { return v == 1.0; }));
  const Tensor n = attention_coefficients(AttentionKind::GCN, h, g, {}).value();
  for (double v : n.data()) CHECK(v == 0.25);
}

TEST_CASE("SymGAT raw coefficients are symmetric") {
  Rng rng(3);
  const Graph g = random_check_graph(rng, 6, 4);
  Tape t;
  AttentionWeights w;
  w.a_dst = t.constant(random_tensor(rng, 1, 4));
  w.a_src = t.constant(random_tensor(rng, 1, 4));
  const Tensor raw = attention_raw(AttentionKind::SymGAT, t.constant(g.features()), g, w).value();
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const std::size_t r = edge_index(g, g.edge_dst()[e], g.edge_src()[e]);
    CHECK(raw(e, 0) == doctest::Approx(raw(r, 0)).epsilon(1e-15));
  }
}

TEST_CASE("GAT on a 3-node star matches a hand trace") {
  const Tensor x = Tensor::from_rows({{1, 0}, {0, 2}, {-1, 1}});
  const Graph g = make_graph(3, {{0, 1}, {0, 2}}, x);
  Tape t;
  AttentionWeights w;
  w.a_dst = t.constant(Tensor::from_rows({{0.5, -1}}));
  w.a_src = t.constant(Tensor::from_rows({{1, 0.25}}));
  const Tensor coef = attention_coefficients(AttentionKind::GAT, t.constant(x), g, w).value();

  // Hub 0 scores: dst part 0.5; src parts 1, 0.5, -0.75.
  auto leaky = [](double v) { return v > 0 ? v : 0.2 * v; };
  const double s[3] = {leaky(0.5 + 1.0), leaky(0.5 + 0.5), leaky(0.5 - 0.75)};
  const double z = std::exp(s[0]) + std::exp(s[1]) + std::exp(s[2]);
  for (std::size_t j = 0; j < 3; ++j) CHECK(coef(edge_index(g, j, 0), 0) == doctest::Approx(std::exp(s[j]) / z).epsilon(1e-14));
}

TEST_CASE("normalised kinds sum to one over every neighbourhood") {
  Rng rng(11);
  const Graph g = random_check_graph(rng, 7, 4);
  for (AttentionKind kind : kAllAttentions) {
    if (!attention_is_normalised(kind)) continue;
    CAPTURE(to_string(kind));
    Tape t;
    AttentionWeights w;
    for (const auto& role : attention_roles(kind)) {
      const Var v = t.constant(random_tensor(rng, 1, 4));
      if (role == "a_dst") w.a_dst = v;
      if (role == "a_src") w.a_src = v;
      if (role == "a1") w.a1 = v;
      if (role == "a2") w.a2 = v;
      if (role == "a") w.a = v;
      if (role == "g") w.g = v;
    }
    const Tensor c = attention_coefficients(kind, t.constant(g.features()), g, w).value();
    std::vector<double> total(g.num_nodes(), 0.0);
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      CHECK(c(e, 0) >= 0.0);
      total[g.edge_dst()[e]] += c(e, 0);
    }
    for (double s : total) CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("two-node block example") {
  const Tensor x = Tensor::from_rows({{1, 0}, {0, 1}});
  const Graph g = make_graph(2, {{0, 1}}, x);
  Tape t;
  const BlockChoice c{1, AttentionKind::Const, 1, Aggregator::Sum, Activation::None};
  const Var out = graph_block(g, t.constant(x), c, identity_weights(t, 2));
  CHECK(out.value() == Tensor::from_rows({{2, 1}, {1, 2}}));
  const Var zero = graph_block(g, t.constant(Tensor::matrix(2, 2)), c, identity_weights(t, 2));
  CHECK(zero.value() == Tensor::matrix(2, 2));
}

TEST_CASE("a probability of one leaves the block output unchanged") {
  Rng rng(5);
  const Graph g = random_check_graph(rng, 6, 4);
  BlockParams bp(BlockSpace{0, 4, 16, CandidateLists{}}, "b");
  ParameterStore store;
  bp.register_params(store, rng);
  Selection sel;
  sel[SubBlock::Expansion].index = 1;
  sel[SubBlock::Attention].index = 2;
  sel[SubBlock::Heads].index = 2;
  sel[SubBlock::Aggregate].index = 1;
  sel[SubBlock::Activation].index = 7;
  Tape t;
  const Var x = t.constant(g.features());
  const Tensor detached = block_forward(g, x, sel, bp, store, ScaleMode::Detached).value();
  const Tensor attached = block_forward(g, x, sel, bp, store, ScaleMode::Attached).value();
  CHECK(detached == attached);
}

TEST_CASE("MEAN and SUM agree for a node whose only in-neighbour is itself") {
  const Tensor x = Tensor::from_rows({{1, 2}, {3, -1}, {0.5, 4}});
  const Graph g = make_graph(3, {{0, 1}}, x);
  Tape t;
  const BlockChoice sum{1, AttentionKind::GCN, 1, Aggregator::Sum, Activation::Tanh};
  BlockChoice mean = sum;
  mean.aggregate = Aggregator::Mean;
  const Tensor a = graph_block(g, t.constant(x), sum, identity_weights(t, 2)).value();
  const Tensor b = graph_block(g, t.constant(x), mean, identity_weights(t, 2)).value();
  REQUIRE(g.degrees()[2] == 1);
  CHECK(a(2, 0) == b(2, 0));
  CHECK(a(2, 1) == b(2, 1));
  CHECK(a(0, 0) != b(0, 0));
}

TEST_CASE("block output is permutation equivariant") {
  Rng rng(17);
  const Graph g = random_check_graph(rng, 8, 4);
  std::vector<std::size_t> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

  GraphInput in;
  in.num_nodes = 8;
  in.features = Tensor::matrix(8, 4);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t k = 0; k < 4; ++k) in.features(perm[i], k) = g.features()(i, k);
  for (const auto& [a, b] : g.undirected_edges()) in.edges.emplace_back(perm[a], perm[b]);
  in.labels.assign(8, 0);
  const Graph pg = Graph::build(in);

  BlockParams bp(BlockSpace{0, 4, 16, CandidateLists{}}, "b");
  ParameterStore store;
  bp.register_params(store, rng);
  for (AttentionKind att : kAllAttentions) {
    for (Aggregator agg : kAllAggregators) {
      const BlockChoice c{2, att, 4, agg, Activation::ELU};
      CAPTURE(to_string(att));
      CAPTURE(to_string(agg));
      Tape t;
      const Tensor y = graph_block(g, t.constant(g.features()), c, bp.bind(t, store, c)).value();
      const Tensor py = graph_block(pg, t.constant(pg.features()), c, bp.bind(t, store, c)).value();
      double worst = 0.0;
      for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t k = 0; k < 16; ++k) worst = std::max(worst, std::abs(y(i, k) - py(perm[i], k)));
      CHECK(worst < 1e-12);
    }
  }
}

TEST_CASE("supernet with one selection equals the standalone network") {
  Rng rng(23);
  const Graph g = random_check_graph(rng, 9, 5, 3);
  SearchSpace space{2, 16, 5, 3, CandidateLists{}, true};
  const Supernet net(space, 4);
  for (int trial = 0; trial < 4; ++trial) {
    std::vector<Selection> sel(2);
    Genotype geno;
    for (std::size_t i = 0; i < 2; ++i) {
      for (SubBlock k : kSubBlocks) sel[i][k].index = rng.below(space.candidates.size(k));
      geno.layers.push_back(space.candidates.choice(sel[i].indices()));
    }
    geno.hidden_sizes = {16, 16};
    geno.routing = trial % 2 ? RoutingSet{{0, 1}, {1, 1}} : RoutingSet{};
    GenotypeNetwork single(geno, 5, 3, 99);
    for (auto& [name, p] : single.params().entries()) {
      std::string src = name.rfind("genotype/router/", 0) == 0 ? name.substr(9) : "supernet/" + name.substr(9);
      single.params().value(name) = net.weights().value(src);
    }
    Tape t;
    const Gates gates = net.router().binary_gates(geno.routing);
    const Tensor a = net.forward(t, g, sel, ScaleMode::Detached, nullptr, &gates).value();
    const Tensor b = single.forward(t, g).value();
    CHECK(max_abs_diff(a, b) <= 1e-12);
  }
}

TEST_CASE("candidate validation") {
  CandidateLists c;
  CHECK_NOTHROW(c.validate(16));
  CHECK_THROWS(c.validate(24));
  c.heads = {1, 1};
  CHECK_THROWS(c.validate(16));
  c = CandidateLists{};
  c.aggregators.clear();
  CHECK_THROWS(c.validate(16));
}

}  // TEST_SUITE
