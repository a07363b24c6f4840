#pragma once

// Shortcut routing between graph blocks.
//
// Entry (i, j) with i <= j carries the input of block i, through a bias-free
// linear map g_ij, into the output of block j:
//   O_j = O'_j + sum_{i <= j} gate_ij * g_ij(I_i)
// and I_{j+1} = O_j. Diagonal entries are residual skips over one block.
// Entries below the diagonal never exist.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gnasforge/params.hpp"
#include "gnasforge/rng.hpp"
#include "gnasforge/tape.hpp"

namespace gnasforge {

inline constexpr double kDefaultTauMin = 1e-3;

struct TempSchedule {
  enum class Kind { Exp, CosineExp };

  Kind kind = Kind::Exp;
  double alpha = 1.0;
  std::int64_t e_start = 80;   // e_s
  std::int64_t e_max = 400;    // e_m
  std::int64_t e_cos = 100;
  std::int64_t e_exp = 300;
  /// Cosine frequency; defaults to pi / (2 (e_exp - e_cos)), which sweeps the
  /// cosine phase from 1 down to 0.
  std::optional<double> omega;
  double tau_min = kDefaultTauMin;

  double omega_value() const;
};

std::string to_string(TempSchedule::Kind kind);
TempSchedule::Kind parse_schedule_kind(const std::string& s);

/// Temperature at epoch e, clamped to [tau_min, 1].
///   Exp:        1 for e < e_s, else exp(-(alpha / e_m) (e - e_s))
///   CosineExp:  1 for e < e_cos, cos(omega (e - e_cos)) for e_cos < e < e_exp,
///               else exp(-(alpha / e_m) (e - e_exp))
/// The CosineExp form jumps back up at e_exp; that is how it is defined.
double temp_anneal(std::int64_t epoch, const TempSchedule& schedule);

/// sigmoid((theta + g) / tau), evaluated without overflow for any argument.
double gumbel_sigmoid(double theta, double tau, double gumbel);
Var gumbel_sigmoid(Var theta, double tau, double gumbel);

enum class GateMode {
  Sampled,        // sigmoid((theta + g) / tau), g ~ Gumbel(0, 1)
  Deterministic,  // sigmoid(theta / tau)
  Binary          // 1 on the derived shortcut set, 0 elsewhere
};

using RoutingSet = std::vector<std::pair<std::size_t, std::size_t>>;

/// Keeps (i, j), i <= j, iff theta_ij > 0, i.e. the noise-free gate at
/// tau = 1 exceeds one half. Sorted by (i, j).
RoutingSet derive_binary_routing(const Tensor& theta);

/// sigmoid(theta) on and above the diagonal, 0 below.
Tensor expected_gates(const Tensor& theta);

/// Gate per (i, j). Inactive entries contribute nothing; an active entry
/// without a factor contributes its shortcut unscaled.
struct Gates {
  std::size_t blocks = 0;
  std::vector<char> active;
  std::vector<std::optional<Var>> factor;

  explicit Gates(std::size_t n = 0) : blocks(n), active(n * n, 0), factor(n * n) {}
  bool is_active(std::size_t i, std::size_t j) const { return active[i * blocks + j] != 0; }
  const std::optional<Var>& at(std::size_t i, std::size_t j) const { return factor[i * blocks + j]; }
  /// Gate value (0 when inactive, 1 when active without factor).
  double value(std::size_t i, std::size_t j) const;
};

class Router {
 public:
  /// `input_dims[i]` is the width of block i's input; every block outputs
  /// `output_dim`.
  Router(std::vector<std::size_t> input_dims, std::size_t output_dim,
         std::string prefix = "router");

  std::size_t blocks() const { return input_dims_.size(); }
  std::string theta_name() const { return prefix_ + "/theta"; }
  std::string shortcut_name(std::size_t i, std::size_t j) const;

  /// theta = 0 (an L x L matrix whose lower triangle never changes).
  void register_priors(ParameterStore& store) const;
  /// Glorot-initialised g_ij for every listed pair (all i <= j by default).
  void register_shortcuts(ParameterStore& store, Rng& rng,
                          const std::optional<RoutingSet>& only = std::nullopt) const;

  /// One Gumbel(0, 1) draw per matrix entry.
  Tensor sample_gumbel(Rng& rng) const;

  Gates sampled_gates(Tape& tape, const ParameterStore& priors, double tau,
                      const Tensor& gumbel_draws);
  Gates sampled_gates(Tape& tape, const ParameterStore& priors, double tau, Rng& rng);
  Gates deterministic_gates(Tape& tape, const ParameterStore& priors, double tau);
  Gates binary_gates(const RoutingSet& routing) const;

  /// O_j for one block given the inputs I_0..I_j seen so far.
  Var route_output(std::size_t j, const std::vector<Var>& inputs, Var block_output,
                   const Gates& gates, const ParameterStore& shortcuts) const;
  /// All outputs at once for fixed inputs and raw outputs.
  std::vector<Var> route(const std::vector<Var>& inputs, const std::vector<Var>& block_outputs,
                         const Gates& gates, const ParameterStore& shortcuts) const;

  /// tau below tau_min is raised to it and noted here.
  const std::vector<std::string>& warnings() const { return warnings_; }
  double clamp_tau(double tau, double tau_min = kDefaultTauMin);

 private:
  Var theta_entry(Tape& tape, const ParameterStore& priors, std::size_t i, std::size_t j) const;

  std::vector<std::size_t> input_dims_;
  std::size_t output_dim_;
  std::string prefix_;
  std::vector<std::string> warnings_;
};

}  // namespace gnasforge
