#include "gnasforge/macro_router.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "gnasforge/init.hpp"
#include "gnasforge/ops.hpp"

namespace gnasforge {

double TempSchedule::omega_value() const {
  if (omega) return *omega;
  if (e_exp <= e_cos) throw std::invalid_argument("TempSchedule: e_exp must exceed e_cos");
  return std::numbers::pi / (2.0 * static_cast<double>(e_exp - e_cos));
}

std::string to_string(TempSchedule::Kind kind) {
  return kind == TempSchedule::Kind::Exp ? "exp" : "cosine_exp";
}

TempSchedule::Kind parse_schedule_kind(const std::string& s) {
  if (s == "exp") return TempSchedule::Kind::Exp;
  if (s == "cosine_exp") return TempSchedule::Kind::CosineExp;
  throw std::invalid_argument("schedule kind: expected \"exp\" or \"cosine_exp\", got \"" + s +
                              "\"");
}

double temp_anneal(std::int64_t epoch, const TempSchedule& s) {
  const double e = static_cast<double>(epoch);
  const double rate = s.alpha / static_cast<double>(s.e_max);
  double tau;
  if (s.kind == TempSchedule::Kind::Exp) {
    tau = epoch < s.e_start ? 1.0 : std::exp(-rate * (e - static_cast<double>(s.e_start)));
  } else if (epoch < s.e_cos) {
    tau = 1.0;
  } else if (epoch > s.e_cos && epoch < s.e_exp) {
    tau = std::cos(s.omega_value() * (e - static_cast<double>(s.e_cos)));
  } else {
    tau = std::exp(-rate * (e - static_cast<double>(s.e_exp)));
  }
  return std::clamp(tau, s.tau_min, 1.0);
}

double gumbel_sigmoid(double theta, double tau, double gumbel) {
  const double x = (theta + gumbel) / tau;
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var gumbel_sigmoid(Var theta, double tau, double gumbel) {
  Tape& tape = *theta.tape();
  return ops::sigmoid(ops::scale(ops::add(theta, tape.constant(Tensor::scalar(gumbel))), 1.0 / tau));
}

RoutingSet derive_binary_routing(const Tensor& theta) {
  RoutingSet out;
  for (std::size_t i = 0; i < theta.rows(); ++i)
    for (std::size_t j = i; j < theta.cols(); ++j)
      if (theta(i, j) > 0.0) out.emplace_back(i, j);
  return out;
}

Tensor expected_gates(const Tensor& theta) {
  Tensor out(theta.shape(), 0.0);
  for (std::size_t i = 0; i < theta.rows(); ++i)
    for (std::size_t j = i; j < theta.cols(); ++j) out(i, j) = gumbel_sigmoid(theta(i, j), 1.0, 0.0);
  return out;
}

double Gates::value(std::size_t i, std::size_t j) const {
  if (!is_active(i, j)) return 0.0;
  const auto& f = at(i, j);
  return f ? f->value().item() : 1.0;
}

Router::Router(std::vector<std::size_t> input_dims, std::size_t output_dim, std::string prefix)
    : input_dims_(std::move(input_dims)), output_dim_(output_dim), prefix_(std::move(prefix)) {
  if (input_dims_.empty()) throw std::invalid_argument("Router: no blocks");
}

std::string Router::shortcut_name(std::size_t i, std::size_t j) const {
  return prefix_ + "/shortcut/" + std::to_string(i) + "_" + std::to_string(j);
}

void Router::register_priors(ParameterStore& store) const {
  store.add(theta_name(), Tensor::matrix(blocks(), blocks(), 0.0));
}

void Router::register_shortcuts(ParameterStore& store, Rng& rng,
                                const std::optional<RoutingSet>& only) const {
  auto add = [&](std::size_t i, std::size_t j) {
    if (i > j || j >= blocks()) {
      throw std::invalid_argument("Router: shortcut (" + std::to_string(i) + "," +
                                  std::to_string(j) + ") is not a forward connection among " +
                                  std::to_string(blocks()) + " blocks");
    }
    store.add(shortcut_name(i, j), glorot_uniform(input_dims_[i], output_dim_, rng));
  };
  if (only) {
    for (const auto& [i, j] : *only) add(i, j);
    return;
  }
  for (std::size_t i = 0; i < blocks(); ++i)
    for (std::size_t j = i; j < blocks(); ++j) add(i, j);
}

Tensor Router::sample_gumbel(Rng& rng) const {
  Tensor g = Tensor::matrix(blocks(), blocks());
  for (double& v : g.data()) v = rng.gumbel();
  return g;
}

double Router::clamp_tau(double tau, double tau_min) {
  if (tau < tau_min) {
    warnings_.push_back("temperature " + std::to_string(tau) + " raised to floor " +
                        std::to_string(tau_min));
    return tau_min;
  }
  return tau;
}

Var Router::theta_entry(Tape& tape, const ParameterStore& priors, std::size_t i,
                        std::size_t j) const {
  const std::size_t row[] = {i};
  return ops::slice_cols(ops::gather_rows(tape.param(priors, theta_name()), row), j, j + 1);
}

Gates Router::sampled_gates(Tape& tape, const ParameterStore& priors, double tau,
                            const Tensor& gumbel_draws) {
  tau = clamp_tau(tau);
  Gates gates(blocks());
  for (std::size_t i = 0; i < blocks(); ++i) {
    for (std::size_t j = i; j < blocks(); ++j) {
      gates.active[i * blocks() + j] = 1;
      gates.factor[i * blocks() + j] =
          gumbel_sigmoid(theta_entry(tape, priors, i, j), tau, gumbel_draws(i, j));
    }
  }
  return gates;
}

Gates Router::sampled_gates(Tape& tape, const ParameterStore& priors, double tau, Rng& rng) {
  return sampled_gates(tape, priors, tau, sample_gumbel(rng));
}

Gates Router::deterministic_gates(Tape& tape, const ParameterStore& priors, double tau) {
  tau = clamp_tau(tau);
  Gates gates(blocks());
  for (std::size_t i = 0; i < blocks(); ++i) {
    for (std::size_t j = i; j < blocks(); ++j) {
      gates.active[i * blocks() + j] = 1;
      gates.factor[i * blocks() + j] = gumbel_sigmoid(theta_entry(tape, priors, i, j), tau, 0.0);
    }
  }
  return gates;
}

Gates Router::binary_gates(const RoutingSet& routing) const {
  Gates gates(blocks());
  for (const auto& [i, j] : routing) {
    if (i > j || j >= blocks()) {
      throw std::invalid_argument("Router: shortcut (" + std::to_string(i) + "," +
                                  std::to_string(j) + ") is not a forward connection");
    }
    gates.active[i * blocks() + j] = 1;
  }
  return gates;
}

Var Router::route_output(std::size_t j, const std::vector<Var>& inputs, Var block_output,
                         const Gates& gates, const ParameterStore& shortcuts) const {
  if (inputs.size() < j + 1) {
    throw std::invalid_argument("Router: output " + std::to_string(j) + " needs " +
                                std::to_string(j + 1) + " inputs, got " +
                                std::to_string(inputs.size()));
  }
  Tape& tape = *block_output.tape();
  Var out = block_output;
  for (std::size_t i = 0; i <= j; ++i) {
    if (!gates.is_active(i, j)) continue;
    const Var w = tape.param(shortcuts, shortcut_name(i, j));
    if (inputs[i].cols() != w.rows() || w.cols() != block_output.cols() ||
        inputs[i].rows() != block_output.rows()) {
      throw std::invalid_argument("Router: shortcut (" + std::to_string(i) + "," +
                                  std::to_string(j) + ") maps " + shape_string(inputs[i].shape()) +
                                  " through " + shape_string(w.shape()) + " onto output " +
                                  shape_string(block_output.shape()));
    }
    Var carried = ops::matmul(inputs[i], w);
    if (const auto& f = gates.at(i, j)) carried = ops::mul(carried, *f);
    out = ops::add(out, carried);
  }
  return out;
}

std::vector<Var> Router::route(const std::vector<Var>& inputs, const std::vector<Var>& block_outputs,
                               const Gates& gates, const ParameterStore& shortcuts) const {
  if (inputs.size() != blocks() || block_outputs.size() != blocks()) {
    throw std::invalid_argument("Router::route: expected " + std::to_string(blocks()) +
                                " inputs and outputs");
  }
  std::vector<Var> out;
  for (std::size_t j = 0; j < blocks(); ++j)
    out.push_back(route_output(j, inputs, block_outputs[j], gates, shortcuts));
  return out;
}

}  // namespace gnasforge
