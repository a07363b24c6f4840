#include <doctest.h>

#include <cmath>

#include "gnasforge/controller.hpp"
#include "gnasforge/ops.hpp"

using namespace gnasforge;

namespace {

ControllerLayout two_layer_layout() { return ControllerLayout{{CandidateLists{}, CandidateLists{}}}; }

double row_total(const Tensor& t) {
  double s = 0;
  for (double v : t.data()) s += v;
  return s;
}

}  // namespace

TEST_SUITE("controller") {

TEST_CASE("zero weights give uniform probabilities") {
  const Controller c(two_layer_layout());
  ParameterStore store;
  Rng rng(1);
  c.register_params(store, rng);
  for (const auto& entry : store.entries()) store.value(entry.first).fill(0.0);
  const ProbabilityTensor p = c.probabilities(store);
  for (std::size_t i = 0; i < 2; ++i) {
    for (SubBlock k : kSubBlocks) {
      const Tensor& v = p[i][static_cast<std::size_t>(k)];
      CHECK(v.cols() == c.layout().length(i, k));
      for (double x : v.data()) CHECK(x == doctest::Approx(1.0 / double(v.cols())).epsilon(1e-15));
    }
  }
}

TEST_CASE("layout and initialisation") {
  const Controller c(two_layer_layout());
  ParameterStore store;
  Rng rng(2);
  c.register_params(store, rng);
  CHECK(store.value(c.prior_name()).shape() == Shape{1, kControllerWidth});
  CHECK(store.value(c.mlp_name(0)).shape() == Shape{kControllerWidth, kControllerWidth});
  CHECK(store.value(c.head_name(1, SubBlock::Heads)).shape() == Shape{kControllerWidth, 5});
  double sq = 0;
  for (double v : store.value(c.prior_name()).data()) sq += v * v;
  CHECK(std::sqrt(sq / kControllerWidth) == doctest::Approx(0.01).epsilon(0.2));
  const ProbabilityTensor p = c.probabilities(store);
  for (const auto& layer : p)
    for (const Tensor& v : layer) CHECK(row_total(v) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("add_noise hand example and zero temperature") {
  const Tensor p = Tensor::from_rows({{0.5, 0.5}});
  const Tensor u = Tensor::from_rows({{0.2, 0.6}});
  const Tensor out = add_noise(p, 1.0, u);
  CHECK(out[0] == doctest::Approx(0.7 / 1.8).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(1.1 / 1.8).epsilon(1e-15));

  const Tensor q = Tensor::from_rows({{0.2, 0.3, 0.5}});
  CHECK(add_noise(q, 0.0, Tensor::from_rows({{0.9, 0.1, 0.4}})) == q);
  CHECK_THROWS(add_noise(q, -1.0, Tensor::from_rows({{0.9, 0.1, 0.4}})));
}

TEST_CASE("noisy probabilities stay a distribution for any temperature") {
  Rng rng(9);
  const Tensor p = Tensor::from_rows({{0.7, 0.1, 0.15, 0.05}});
  for (double tau : {0.0, 1e-3, 0.5, 1.0, 10.0, 1e6}) {
    Tensor u = Tensor::matrix(1, 4);
    for (double& v : u.data()) v = rng.uniform();
    const Tensor out = add_noise(p, tau, u);
    CHECK(row_total(out) == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : out.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("extract_indices examples") {
  ProbabilityTensor p(1);
  for (auto& v : p[0]) v = Tensor::from_rows({{0.25, 0.25, 0.25, 0.25}});
  p[0][1] = Tensor::from_rows({{0.2, 0.3, 0.5}});
  const OperatorIndex idx = extract_indices(p);
  CHECK(idx[0][0] == 0);
  CHECK(idx[0][1] == 2);
}

TEST_CASE("argmax is invariant under scaling the logits") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    Tensor logits = Tensor::matrix(1, 7);
    for (double& v : logits.data()) v = rng.normal();
    Tensor doubled = logits;
    for (double& v : doubled.data()) v = 2.0 * v;
    const Tensor a = ops::softmax_rows(t.constant(logits)).value();
    const Tensor b = ops::softmax_rows(t.constant(doubled)).value();
    CHECK(select_operator(a.data()).index == select_operator(b.data()).index);
  }
}

TEST_CASE("large temperature drives each entry to 1/T on average") {
  const Tensor p = Tensor::from_rows({{0.9, 0.05, 0.05}});
  Rng rng(12);
  const int n = 100000;
  double sum = 0, sq = 0;
  for (int s = 0; s < n; ++s) {
    Tensor u = Tensor::matrix(1, 3);
    for (double& v : u.data()) v = rng.uniform();
    const double x = add_noise(p, 1e6, u)[0];
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0 / 3.0) < 3 * se);
}

TEST_CASE("gradient reaches z and the MLP through the selected probabilities") {
  const Controller c(two_layer_layout());
  ParameterStore store;
  Rng rng(6);
  c.register_params(store, rng);
  Tape t;
  const ProbabilityVars pbar = c.forward(t, store);
  const ProbabilityTensor noise = sample_exploration_noise(c.layout(), rng);
  const ProbabilityVars pg = add_noise(pbar, 0.5, noise);
  const OperatorIndex idx = extract_indices(values_of(pg));
  std::vector<Var> picked;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < kSubBlockCount; ++k)
      picked.push_back(ops::slice_cols(pg[i][k], idx[i][k], idx[i][k] + 1));
  const Var loss = ops::log(ops::sum(ops::concat_cols(picked)));
  const Gradients g = t.backward(loss);
  for (const std::string& name : {c.prior_name(), c.mlp_name(0), c.mlp_name(1)}) {
    REQUIRE(g.count(name));
    double norm = 0;
    for (double v : g.at(name).data()) norm += v * v;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("perturbing z changes the probabilities") {
  const Controller c(two_layer_layout());
  ParameterStore store;
  Rng rng(8);
  c.register_params(store, rng);
  const ProbabilityTensor before = c.probabilities(store);
  store.value(c.prior_name())[0] += 0.1;
  const ProbabilityTensor after = c.probabilities(store);
  double diff = 0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < kSubBlockCount; ++k) diff = std::max(diff, max_abs_diff(before[i][k], after[i][k]));
  CHECK(diff > 0.0);
}

TEST_CASE("selection_for_layer pairs indices with their values") {
  ProbabilityTensor p(1);
  for (auto& v : p[0]) v = Tensor::from_rows({{0.1, 0.6, 0.3}});
  const Selection s = selection_for_layer(p, extract_indices(p), 0);
  for (SubBlock k : kSubBlocks) {
    CHECK(s[k].index == 1);
    CHECK(s[k].value == 0.6);
  }
}

}  // TEST_SUITE
