#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "gnasforge/adam.hpp"
#include "gnasforge/checkpoint.hpp"
#include "gnasforge/gradcheck.hpp"
#include "gnasforge/gradcheck_suite.hpp"
#include "gnasforge/kernels.hpp"
#include "gnasforge/micro_space.hpp"
#include "gnasforge/ops.hpp"
#include "gnasforge/rng.hpp"

using namespace gnasforge;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = -3, double hi = 3) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE("tensor_core") {

TEST_CASE("matmul by identity returns the operand") {
  Rng rng(1);
  Tape t;
  const Tensor x = random_tensor(3, 4, rng);
  const Tensor eye = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  CHECK(ops::matmul(t.constant(eye), t.constant(x)).value() == x);
}

TEST_CASE("shape mismatch names the primitive and both shapes") {
  Tape t;
  const Var a = t.constant(Tensor::matrix(2, 3));
  const Var b = t.constant(Tensor::matrix(4, 2));
  try {
    ops::matmul(a, b);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::add(a, b), std::invalid_argument);
}

TEST_CASE("gather index out of range throws") {
  Tape t;
  const std::size_t idx[] = {0, 3};
  CHECK_THROWS_AS(ops::gather_rows(t.constant(Tensor::matrix(3, 2)), idx), std::out_of_range);
}

TEST_CASE("broadcasting over a size-1 row, column or scalar") {
  Tape t;
  const Var a = t.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  CHECK(ops::add(a, t.constant(Tensor::from_rows({{10, 20}}))).value() == Tensor::from_rows({{11, 22}, {13, 24}}));
  CHECK(ops::mul(a, t.constant(Tensor::from_rows({{2}, {3}}))).value() == Tensor::from_rows({{2, 4}, {9, 12}}));
  CHECK(ops::sub(a, t.constant(Tensor::scalar(1))).value() == Tensor::from_rows({{0, 1}, {2, 3}}));
}

TEST_CASE("segment_sum of two rows into one segment") {
  Tape t;
  const std::size_t seg[] = {0, 0};
  const Var v = t.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  CHECK(ops::segment_sum(v, seg, 1).value() == Tensor::from_rows({{4, 6}}));
}

TEST_CASE("segment_max routes the whole gradient to the maximum row") {
  Tape t;
  const std::size_t seg[] = {0, 0, 0};
  const Var v = t.leaf("v", Tensor::from_rows({{1}, {5}, {2}}));
  const Var m = ops::segment_max(v, seg, 1);
  CHECK(m.value() == Tensor::from_rows({{5}}));
  const Gradients g = t.backward(ops::sum(m));
  CHECK(g.at("v") == Tensor::from_rows({{0}, {1}, {0}}));
}

TEST_CASE("segment_mean equals segment_sum over counts; empty segments give zeros") {
  Rng rng(3);
  Tape t;
  const Var v = t.constant(random_tensor(7, 3, rng));
  const std::vector<std::size_t> seg{0, 2, 2, 0, 2, 3, 0};
  const Tensor sum = ops::segment_sum(v, seg, 5).value();
  const Tensor mean = ops::segment_mean(v, seg, 5).value();
  const Tensor max = ops::segment_max(v, seg, 5).value();
  const double counts[] = {3, 0, 3, 1, 0};
  for (std::size_t s = 0; s < 5; ++s) {
    for (std::size_t c = 0; c < 3; ++c) {
      if (counts[s] == 0) {
        CHECK(sum(s, c) == 0.0);
        CHECK(mean(s, c) == 0.0);
        CHECK(max(s, c) == 0.0);
      } else {
        CHECK(mean(s, c) == doctest::Approx(sum(s, c) / counts[s]).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("segment ids past num_segments are rejected") {
  Tape t;
  const std::size_t seg[] = {0, 2};
  CHECK_THROWS(ops::segment_sum(t.constant(Tensor::matrix(2, 1)), seg, 2));
}

TEST_CASE("log outside its domain throws") {
  Tape t;
  CHECK_THROWS_AS(ops::log(t.constant(Tensor::from_rows({{1.0, 0.0}}))), std::domain_error);
}

TEST_CASE("backward of sum(x*x) at 3 is 6") {
  Tape t;
  const Var x = t.leaf("x", Tensor::scalar(3));
  CHECK(t.backward(ops::sum(ops::mul(x, x))).at("x").item() == 6.0);
}

TEST_CASE("sigmoid gradient at 0 is 0.25") {
  Tape t;
  const Var x = t.leaf("x", Tensor::scalar(0));
  CHECK(t.backward(ops::sigmoid(x)).at("x").item() == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("non-scalar loss is rejected and frozen leaves get no gradient") {
  Tape t;
  const Var x = t.leaf("x", Tensor::matrix(2, 2, 1.0));
  const Var y = t.leaf("y", Tensor::matrix(2, 2, 2.0), false);
  CHECK_THROWS_AS(t.backward(ops::mul(x, y)), std::invalid_argument);
  const Gradients g = t.backward(ops::sum(ops::mul(x, y)));
  CHECK(g.count("x") == 1);
  CHECK(g.count("y") == 0);
}

TEST_CASE("composite matmul-tanh-softmax on 5 nodes matches central differences") {
  Rng rng(11);
  const Tensor w = random_tensor(4, 3, rng);
  const Tensor r = random_tensor(5, 3, rng);
  const GradCheckResult res = finite_difference_check(
      [&](Tape& t, Var x) {
        const Var s = ops::softmax_rows(ops::tanh(ops::matmul(x, t.constant(w))));
        return ops::sum(ops::mul(s, t.constant(r)));
      },
      random_tensor(5, 4, rng));
  CHECK(res.max_rel_error < 1e-4);
  CHECK(res.kinks == 0);
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(5);
  const Tensor x0 = random_tensor(3, 3, rng);
  auto grad = [&](double a, double b) {
    Tape t;
    const Var x = t.leaf("x", x0);
    const Var f = ops::sum(ops::exp(ops::scale(x, 0.3)));
    const Var g = ops::sum(ops::mul(ops::tanh(x), x));
    return t.backward(ops::add(ops::scale(f, a), ops::scale(g, b))).at("x");
  };
  const Tensor gf = grad(1, 0), gg = grad(0, 1), combo = grad(2.5, -1.5);
  for (std::size_t i = 0; i < combo.numel(); ++i) CHECK(std::abs(combo[i] - (2.5 * gf[i] - 1.5 * gg[i])) < 1e-10);
}

TEST_CASE("finite_difference_check reference cases") {
  Rng rng(2);
  const GradCheckResult s = finite_difference_check([](Tape&, Var x) { return ops::sum(x); }, random_tensor(3, 2, rng));
  CHECK(s.max_rel_error < 1e-10);
  const GradCheckResult th =
      finite_difference_check([](Tape&, Var x) { return ops::sum(ops::tanh(x)); }, Tensor::matrix(2, 2, 0.0));
  CHECK(th.max_rel_error < 1e-8);
  CHECK_THROWS_AS(finite_difference_check([](Tape&, Var x) { return ops::sum(ops::log(x)); },
                                          Tensor::matrix(1, 1, 1e-6)),
                  std::domain_error);
}

TEST_CASE("finite_difference_check flags a wrong backward rule") {
  // d/dx of this node is reported as 2x instead of 3x^2.
  const GradCheckResult r = finite_difference_check(
      [](Tape& t, Var x) {
        Tensor y = x.value();
        for (double& v : y.data()) v = v * v * v;
        return ops::sum(t.record("bad_cube", y, {x}, [x](Tape& tape, const Tensor& g) {
          Tensor d = x.value();
          for (std::size_t i = 0; i < d.numel(); ++i) d[i] = 2.0 * d[i] * g[i];
          tape.accumulate(x.id(), d);
        }));
      },
      Tensor::from_rows({{1.5, -2.0}}));
  CHECK(r.max_rel_error > 0.1);
}

TEST_CASE("graph block on a 4-node graph passes the finite-difference check") {
  Rng rng(9);
  const Graph g = random_check_graph(rng, 4, 3);
  const BlockChoice c{2, AttentionKind::GAT, 2, Aggregator::Mean, Activation::Tanh};
  const BlockParams bp(BlockSpace{0, 3, 16, CandidateLists::single(c)}, "b");
  ParameterStore store;
  bp.register_params(store, rng);
  const Tensor r = random_tensor(4, 16, rng);
  const GradCheckResult res = finite_difference_check(
      [&](Tape& t, Var x) { return ops::sum(ops::mul(graph_block(g, x, c, bp.bind(t, store, c)), t.constant(r))); },
      random_tensor(4, 3, rng));
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("Adam first step with unit gradient") {
  ParameterStore s;
  s.add("p", Tensor::scalar(0.0));
  Adam adam(AdamConfig{0.001});
  adam.step(s, {{"p", Tensor::scalar(1.0)}});
  CHECK(std::abs(s.value("p").item() - (-0.001 / (1.0 + 1e-8))) < 1e-18);
  CHECK(std::abs(s.value("p").item() - (-0.000999999990)) < 1e-15);
}

TEST_CASE("Adam three-step trace against a hand recurrence") {
  // p = 1, g = p at each step, lr 0.001, no decay.
  ParameterStore s;
  s.add("p", Tensor::scalar(1.0));
  Adam adam(AdamConfig{0.001});
  double p = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    adam.step(s, {{"p", Tensor::scalar(s.value("p").item())}});
    const double g = p;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, t));
    const double vhat = v / (1.0 - std::pow(0.999, t));
    p -= 0.001 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(std::abs(s.value("p").item() - p) < 1e-12);
  }
  CHECK(adam.steps() == 3);
  // Each step moves by almost exactly lr since |mhat| / sqrt(vhat) = 1 for a constant gradient.
  CHECK(std::abs(p - (1.0 - 0.003)) < 1e-6);
}

TEST_CASE("Adam weight decay is added to the raw gradient") {
  ParameterStore a, b;
  a.add("p", Tensor::scalar(2.0));
  b.add("p", Tensor::scalar(2.0));
  Adam with(AdamConfig{0.01, 0.9, 0.999, 1e-8, 0.5});
  Adam manual(AdamConfig{0.01});
  with.step(a, {{"p", Tensor::scalar(0.3)}});
  manual.step(b, {{"p", Tensor::scalar(0.3 + 0.5 * 2.0)}});
  CHECK(a.value("p") == b.value("p"));
}

TEST_CASE("Adam leaves zero-gradient, missing and frozen parameters alone") {
  ParameterStore s;
  s.add("zero", Tensor::matrix(2, 2, 1.5));
  s.add("missing", Tensor::matrix(1, 3, -0.5));
  s.add("frozen", Tensor::scalar(4.0), false);
  Adam adam;
  adam.step(s, {{"zero", Tensor::matrix(2, 2, 0.0)}, {"frozen", Tensor::scalar(1.0)}});
  CHECK(s.value("zero") == Tensor::matrix(2, 2, 1.5));
  CHECK(s.value("missing") == Tensor::matrix(1, 3, -0.5));
  CHECK(s.value("frozen").item() == 4.0);
  CHECK(adam.moments().count("missing") == 0);
  CHECK(adam.moments().count("frozen") == 0);
  CHECK_THROWS_AS(adam.step(s, {{"zero", Tensor::matrix(1, 1)}}), std::invalid_argument);
}

TEST_CASE("Adam is bit-deterministic") {
  Rng rng(4);
  const Tensor p0 = random_tensor(5, 5, rng);
  std::vector<Tensor> grads;
  for (int i = 0; i < 4; ++i) grads.push_back(random_tensor(5, 5, rng));
  auto run = [&] {
    ParameterStore s;
    s.add("p", p0);
    Adam adam(AdamConfig{0.01, 0.9, 0.999, 1e-8, 1e-3});
    for (const Tensor& g : grads) adam.step(s, {{"p", g}});
    return s.value("p");
  };
  CHECK(run() == run());
}

TEST_CASE("scalar and AVX2 kernel tables agree bit for bit") {
  const kernels::KernelTable* avx = kernels::avx2_table();
  if (!avx) {
    MESSAGE("AVX2 table unavailable on this machine; equivalence not exercised");
    return;
  }
  const kernels::KernelTable& sc = kernels::scalar_table();
  Rng rng(21);
  for (std::size_t n : {1u, 3u, 4u, 7u, 16u, 33u, 130u}) {
    const auto a = random_vec(n, rng), b = random_vec(n, rng, 0.5, 3.0);
    std::vector<double> o1(n), o2(n);
    for (auto op : {&kernels::KernelTable::add, &kernels::KernelTable::sub, &kernels::KernelTable::mul,
                    &kernels::KernelTable::div}) {
      (sc.*op)(n, a.data(), b.data(), o1.data());
      (avx->*op)(n, a.data(), b.data(), o2.data());
      CHECK(bit_equal(o1, o2));
    }
    std::vector<double> y1 = b, y2 = b;
    sc.axpy(n, 0.37, a.data(), y1.data());
    avx->axpy(n, 0.37, a.data(), y2.data());
    CHECK(bit_equal(y1, y2));
    sc.scale(n, -1.3, a.data(), o1.data());
    avx->scale(n, -1.3, a.data(), o2.data());
    CHECK(bit_equal(o1, o2));

    const kernels::AdamCoefficients c{0.01, 0.9, 0.1, 0.999, 0.001, 1 - 0.9 * 0.9, 1 - 0.999 * 0.999, 1e-8, 1e-4};
    std::vector<double> p1 = a, p2 = a, m1 = b, m2 = b, v1(n, 0.2), v2(n, 0.2);
    sc.adam(n, c, p1.data(), b.data(), m1.data(), v1.data());
    avx->adam(n, c, p2.data(), b.data(), m2.data(), v2.data());
    CHECK(bit_equal(p1, p2));
    CHECK(bit_equal(m1, m2));
    CHECK(bit_equal(v1, v2));
  }
  for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 5, 7}, {8, 16, 4}, {13, 9, 6}, {32, 33, 17}}) {
    const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
    std::vector<double> c1 = random_vec(m * n, rng), c2 = c1;
    sc.gemm_acc(m, n, k, a.data(), b.data(), c1.data());
    avx->gemm_acc(m, n, k, a.data(), b.data(), c2.data());
    CHECK(bit_equal(c1, c2));
  }
}

TEST_CASE("checkpoint round-trips names, shapes, values and optimizer steps") {
  Rng rng(8);
  ParameterStore a, b;
  a.add("net/block0/w1", random_tensor(3, 4, rng));
  a.add("net/classifier", random_tensor(4, 2, rng), false);
  b.add("router/theta", random_tensor(2, 2, rng));
  const auto dir = std::filesystem::temp_directory_path() / "gnasforge_ckpt_test";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, {&a, &b}, {{"w", 12}, {"a_micro", 3}});
  const CheckpointData d = load_checkpoint(dir);
  CHECK(d.optimizer_steps.at("w") == 12);
  CHECK(d.optimizer_steps.at("a_micro") == 3);
  CHECK(d.parameters.value("net/block0/w1") == a.value("net/block0/w1"));
  CHECK_FALSE(d.parameters.trainable("net/classifier"));
  CHECK(d.parameters.value("router/theta") == b.value("router/theta"));
  CHECK(std::filesystem::exists(dir / "meta.json"));
  CHECK(std::filesystem::file_size(dir / "net" / "block0" / "w1.bin") == 12 * sizeof(double));

  ParameterStore c;
  c.add("router/theta", Tensor::matrix(2, 2));
  restore_parameters(c, d);
  CHECK(c.value("router/theta") == b.value("router/theta"));
  ParameterStore wrong;
  wrong.add("router/theta", Tensor::matrix(3, 2));
  CHECK_THROWS(restore_parameters(wrong, d));
  std::filesystem::remove_all(dir);
}

TEST_CASE("parameter store rejects duplicates and unknown names") {
  ParameterStore s;
  s.add("a", Tensor::scalar(1));
  CHECK_THROWS(s.add("a", Tensor::scalar(2)));
  CHECK_THROWS(s.value("b"));
  s.add("x/y", Tensor::scalar(1));
  s.add("x/z", Tensor::scalar(1));
  s.set_trainable_prefix("x/", false);
  CHECK_FALSE(s.trainable("x/y"));
  CHECK_FALSE(s.trainable("x/z"));
  CHECK(s.trainable("a"));
}

}  // TEST_SUITE
