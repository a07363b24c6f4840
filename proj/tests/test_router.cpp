#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gnasforge/macro_router.hpp"
#include "gnasforge/ops.hpp"

using namespace gnasforge;

namespace {

Tensor identity(std::size_t d) {
  Tensor eye = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) eye(i, i) = 1.0;
  return eye;
}

Tensor randn(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

ParameterStore identity_shortcuts(const Router& router, std::size_t d) {
  ParameterStore s;
  for (std::size_t i = 0; i < router.blocks(); ++i)
    for (std::size_t j = i; j < router.blocks(); ++j) s.add(router.shortcut_name(i, j), identity(d));
  return s;
}

TempSchedule exp_schedule() {
  TempSchedule s;
  s.e_max = 400;
  return s;
}

}  // namespace

TEST_SUITE("macro_router") {

TEST_CASE("gumbel_sigmoid point values") {
  CHECK(gumbel_sigmoid(0.0, 1.0, 0.0) == 0.5);
  CHECK(gumbel_sigmoid(0.3, 1e-3, 0.2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(gumbel_sigmoid(-0.3, 1e-3, 0.2) == doctest::Approx(0.0));
  CHECK(std::isfinite(gumbel_sigmoid(1e6, 1e-3, 0.0)));
  CHECK(gumbel_sigmoid(-1e6, 1e-3, 0.0) >= 0.0);
  // strictly increasing in theta
  double prev = 0.0;
  for (double th = -3.0; th <= 3.0; th += 0.25) {
    const double y = gumbel_sigmoid(th, 0.7, 0.1);
    CHECK(y > prev);
    prev = y;
  }
}

TEST_CASE("Monte Carlo median of the sampled gate") {
  Rng rng(2024);
  std::vector<double> y(100000);
  for (double& v : y) v = gumbel_sigmoid(0.0, 1.0, rng.gumbel());
  std::nth_element(y.begin(), y.begin() + y.size() / 2, y.end());
  const double expect = 1.0 / (1.0 + std::exp(std::log(std::log(2.0))));
  CHECK(expect == doctest::Approx(0.5906).epsilon(1e-3));
  CHECK(std::abs(y[y.size() / 2] - expect) < 0.005);
}

TEST_CASE("Monte Carlo mean gate increases with theta") {
  Rng rng(7);
  double prev = -1.0;
  for (double th : {-2.0, 0.0, 2.0}) {
    double sum = 0;
    for (int s = 0; s < 100000; ++s) sum += gumbel_sigmoid(th, 1.0, rng.gumbel());
    CHECK(sum / 100000 > prev);
    prev = sum / 100000;
  }
}

TEST_CASE("exponential schedule examples") {
  const TempSchedule s = exp_schedule();
  CHECK(temp_anneal(0, s) == 1.0);
  CHECK(temp_anneal(79, s) == 1.0);
  CHECK(temp_anneal(80, s) == 1.0);
  CHECK(temp_anneal(280, s) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
  double prev = 1.0;
  for (std::int64_t e = 80; e < 400; ++e) {
    const double tau = temp_anneal(e, s);
    CHECK(tau <= prev);
    CHECK(tau >= kDefaultTauMin);
    prev = tau;
  }
}

TEST_CASE("schedule floor clamps steep decay") {
  TempSchedule s = exp_schedule();
  s.alpha = 100.0;
  CHECK(temp_anneal(399, s) == kDefaultTauMin);
}

TEST_CASE("cosine-then-exponential schedule") {
  TempSchedule s = exp_schedule();
  s.kind = TempSchedule::Kind::CosineExp;
  CHECK(s.omega_value() == doctest::Approx(M_PI / 400.0).epsilon(1e-15));
  CHECK(temp_anneal(99, s) == 1.0);
  CHECK(temp_anneal(200, s) == doctest::Approx(std::cos(M_PI / 4.0)).epsilon(1e-14));
  double prev = 1.0;
  for (std::int64_t e = 100; e < 300; ++e) {
    const double tau = temp_anneal(e, s);
    CHECK(tau <= prev);
    prev = tau;
  }
  // The definition jumps back to exp(0) at e_exp.
  CHECK(temp_anneal(300, s) == 1.0);
  CHECK(temp_anneal(399, s) == doctest::Approx(std::exp(-99.0 / 400.0)).epsilon(1e-14));
  for (std::int64_t e = 0; e < 400; ++e) {
    CHECK(temp_anneal(e, s) >= kDefaultTauMin);
    CHECK(temp_anneal(e, s) <= 1.0);
  }
}

TEST_CASE("binary routing follows the sign of theta") {
  CHECK(derive_binary_routing(Tensor::matrix(3, 3)).empty());
  Tensor th = Tensor::matrix(3, 3, -2.0);
  th(0, 1) = 2.0;
  th(2, 0) = 5.0;  // below the diagonal: never routed
  CHECK(derive_binary_routing(th) == RoutingSet{{0, 1}});

  Rng rng(3);
  const Tensor r = randn(rng, 4, 4);
  RoutingSet expect;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i; j < 4; ++j)
      if (r(i, j) > 0) expect.emplace_back(i, j);
  CHECK(derive_binary_routing(r) == expect);
}

TEST_CASE("lower-triangle gates are zero in every mode") {
  Router router({4, 4, 4}, 4);
  ParameterStore priors;
  router.register_priors(priors);
  Rng rng(5);
  priors.value(router.theta_name()) = randn(rng, 3, 3);
  Tape t;
  const Gates sampled = router.sampled_gates(t, priors, 0.5, rng);
  const Gates det = router.deterministic_gates(t, priors, 0.5);
  const Gates bin = router.binary_gates(derive_binary_routing(priors.value(router.theta_name())));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i > j) {
        CHECK(sampled.value(i, j) == 0.0);
        CHECK(det.value(i, j) == 0.0);
        CHECK(bin.value(i, j) == 0.0);
      } else {
        CHECK(sampled.value(i, j) > 0.0);
        CHECK(sampled.value(i, j) < 1.0);
        CHECK(det.value(i, j) == doctest::Approx(1.0 / (1.0 + std::exp(-priors.value(router.theta_name())(i, j) / 0.5))));
      }
    }
  }
  CHECK_THROWS(router.binary_gates(RoutingSet{{2, 1}}));
}

TEST_CASE("temperature below the floor is raised with a warning") {
  Router router({2, 2}, 2);
  ParameterStore priors;
  router.register_priors(priors);
  Tape t;
  router.deterministic_gates(t, priors, 1e-5);
  CHECK(router.warnings().size() == 1);
}

TEST_CASE("all gates closed leaves block outputs unchanged") {
  Router router({2, 2, 2}, 2);
  const ParameterStore s = identity_shortcuts(router, 2);
  Rng rng(1);
  Tape t;
  std::vector<Var> in, out;
  for (int k = 0; k < 3; ++k) {
    in.push_back(t.constant(randn(rng, 3, 2)));
    out.push_back(t.constant(randn(rng, 3, 2)));
  }
  const auto routed = router.route(in, out, Gates(3), s);
  for (int k = 0; k < 3; ++k) CHECK(routed[k].value() == out[k].value());
}

TEST_CASE("a single input-to-output shortcut carries the raw input") {
  Router router({2, 2, 2}, 2);
  const ParameterStore s = identity_shortcuts(router, 2);
  Rng rng(2);
  Tape t;
  const Tensor x = randn(rng, 3, 2);
  std::vector<Var> in{t.constant(x), t.constant(randn(rng, 3, 2)), t.constant(randn(rng, 3, 2))};
  std::vector<Var> out(3, t.constant(Tensor::matrix(3, 2)));
  const auto routed = router.route(in, out, router.binary_gates({{0, 2}}), s);
  CHECK(routed[2].value() == x);
}

TEST_CASE("three-block hand evaluation with fractional gates") {
  Router router({1, 1, 1}, 1);
  const ParameterStore s = identity_shortcuts(router, 1);
  Tape t;
  auto c = [&](double v) { return t.constant(Tensor::scalar(v)); };
  std::vector<Var> in{c(1.0), c(10.0), c(100.0)};
  std::vector<Var> out{c(0.1), c(0.2), c(0.3)};
  Gates g(3);
  auto open = [&](std::size_t i, std::size_t j, double v) {
    g.active[i * 3 + j] = 1;
    g.factor[i * 3 + j] = c(v);
  };
  open(0, 1, 0.5);
  open(0, 2, 1.0);
  open(1, 2, 0.5);
  open(2, 2, 1.0);
  const auto r = router.route(in, out, g, s);
  CHECK(r[0].value().item() == 0.1);
  CHECK(r[1].value().item() == doctest::Approx(0.2 + 0.5 * 1.0));
  CHECK(r[2].value().item() == doctest::Approx(0.3 + 1.0 * 1.0 + 0.5 * 10.0 + 1.0 * 100.0));
}

TEST_CASE("binary routing equals a network wired with only those shortcuts") {
  Rng rng(31);
  Router router({5, 8, 8}, 8);
  ParameterStore s;
  router.register_shortcuts(s, rng);
  const Tensor x = randn(rng, 6, 5);
  const Tensor w0 = randn(rng, 5, 8), w1 = randn(rng, 8, 8), w2 = randn(rng, 8, 8);
  Tensor theta = randn(rng, 3, 3);
  const RoutingSet routing = derive_binary_routing(theta);
  REQUIRE_FALSE(routing.empty());

  Tape t;
  const Gates gates = router.binary_gates(routing);
  auto block = [&](Var v, const Tensor& w) { return ops::tanh(ops::matmul(v, t.constant(w))); };
  std::vector<Var> inputs;
  Var h = t.constant(x);
  const Tensor* ws[] = {&w0, &w1, &w2};
  for (std::size_t j = 0; j < 3; ++j) {
    inputs.push_back(h);
    h = router.route_output(j, inputs, block(h, *ws[j]), gates, s);
  }

  // Oracle: plain tensor arithmetic over the kept pairs only.
  auto mm = [](const Tensor& a, const Tensor& b) {
    Tensor o = Tensor::matrix(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t k = 0; k < a.cols(); ++k)
        for (std::size_t j = 0; j < b.cols(); ++j) o(i, j) += a(i, k) * b(k, j);
    return o;
  };
  std::vector<Tensor> ins;
  Tensor cur = x;
  for (std::size_t j = 0; j < 3; ++j) {
    ins.push_back(cur);
    Tensor o = mm(cur, *ws[j]);
    for (double& v : o.data()) v = std::tanh(v);
    for (const auto& [a, b] : routing) {
      if (b != j) continue;
      const Tensor add = mm(ins[a], s.value(router.shortcut_name(a, b)));
      for (std::size_t k = 0; k < o.numel(); ++k) o[k] += add[k];
    }
    cur = o;
  }
  CHECK(max_abs_diff(h.value(), cur) <= 1e-12);
}

TEST_CASE("shortcut shape mismatch is an error") {
  Router router({3, 4}, 4);
  ParameterStore s;
  Rng rng(1);
  router.register_shortcuts(s, rng);
  Tape t;
  std::vector<Var> in{t.constant(Tensor::matrix(2, 3)), t.constant(Tensor::matrix(2, 4))};
  CHECK_THROWS_AS(router.route_output(1, in, t.constant(Tensor::matrix(2, 5)), router.binary_gates({{0, 1}}), s),
                  std::invalid_argument);
}

TEST_CASE("gradient flows to theta through sampled gates") {
  Router router({2, 2}, 2);
  ParameterStore priors, s;
  router.register_priors(priors);
  Rng rng(4);
  router.register_shortcuts(s, rng);
  Tape t;
  const Gates g = router.sampled_gates(t, priors, 0.7, rng);
  std::vector<Var> in{t.constant(randn(rng, 3, 2)), t.constant(randn(rng, 3, 2))};
  std::vector<Var> out{t.constant(randn(rng, 3, 2)), t.constant(randn(rng, 3, 2))};
  const auto r = router.route(in, out, g, s);
  const Gradients grads = t.backward(ops::sum(ops::mul(r[1], r[1])));
  const Tensor& gt = grads.at(router.theta_name());
  CHECK(gt(0, 1) != 0.0);
  CHECK(gt(1, 0) == 0.0);
}

}  // TEST_SUITE
