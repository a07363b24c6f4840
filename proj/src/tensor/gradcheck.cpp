#include "gnasforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gnasforge {
namespace {

double finite_or_throw(double v) {
  if (!std::isfinite(v)) throw std::domain_error("gradient check: non-finite function value");
  return v;
}

void score(GradCheckResult& r, const std::string& name, double analytic, double base, double up,
           double down, double h) {
  ++r.coordinates;
  const double central = (up - down) / (2.0 * h);
  const double gap = std::abs((up - base) - (base - down)) / h;
  if (gap > kKinkGap * std::max(1.0, std::abs(central))) {
    ++r.kinks;
    return;
  }
  const double err = std::abs(analytic - central) / std::max(1.0, std::abs(analytic));
  if (err > r.max_rel_error) {
    r.max_rel_error = err;
    r.worst = name;
  }
}

}  // namespace

GradCheckResult finite_difference_check(const ScalarOfTensor& f, const Tensor& x, double h) {
  Tensor analytic(x.shape(), 0.0);
  double base;
  {
    Tape tape;
    Var out = f(tape, tape.leaf("x", x));
    base = finite_or_throw(out.value().item());
    Gradients g = tape.backward(out);
    if (auto it = g.find("x"); it != g.end()) analytic = it->second;
  }
  auto eval = [&](const Tensor& at) {
    Tape tape;
    return finite_or_throw(f(tape, tape.leaf("x", at)).value().item());
  };
  GradCheckResult result;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    probe[i] = x[i] + h;
    const double up = eval(probe);
    probe[i] = x[i] - h;
    const double down = eval(probe);
    probe[i] = x[i];
    score(result, "x", analytic[i], base, up, down, h);
  }
  return result;
}

GradCheckResult parameter_gradient_check(const ScalarOfParams& f, ParameterStore& store, double h,
                                         std::size_t max_coords_per_param) {
  Gradients analytic;
  double base;
  {
    Tape tape;
    Var out = f(tape);
    base = finite_or_throw(out.value().item());
    analytic = tape.backward(out);
  }
  auto eval = [&] {
    Tape tape;
    return finite_or_throw(f(tape).value().item());
  };
  GradCheckResult result;
  for (const auto& [name, param] : store.entries()) {
    if (!param.trainable) continue;
    Tensor& value = store.value(name);
    const auto it = analytic.find(name);
    const std::size_t n = value.numel();
    const std::size_t stride =
        (max_coords_per_param == 0 || n <= max_coords_per_param) ? 1 : n / max_coords_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double original = value[i];
      value[i] = original + h;
      const double up = eval();
      value[i] = original - h;
      const double down = eval();
      value[i] = original;
      score(result, name, it == analytic.end() ? 0.0 : it->second[i], base, up, down, h);
    }
  }
  return result;
}

}  // namespace gnasforge
