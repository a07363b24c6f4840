#pragma once

#include <functional>
#include <string>

#include "gnasforge/params.hpp"
#include "gnasforge/tape.hpp"

namespace gnasforge {

inline constexpr double kGradcheckStep = 1e-5;
/// One-sided slopes further apart than this (relative) mark a kink inside
/// the probe interval.
inline constexpr double kKinkGap = 1e-2;

struct GradCheckResult {
  /// max |analytic - central| / max(1, |analytic|) over kink-free coordinates
  double max_rel_error = 0.0;
  std::string worst;  // parameter name (or "x") holding the maximum
  std::size_t coordinates = 0;
  /// Coordinates whose probe interval straddles a non-differentiable point.
  std::size_t kinks = 0;
};

/// Builds a scalar on `tape` from the leaf `x`.
using ScalarOfTensor = std::function<Var(Tape& tape, Var x)>;
/// Builds a scalar on `tape` reading parameters from a store.
using ScalarOfParams = std::function<Var(Tape& tape)>;

/// Central differences with step h along every coordinate of `x`. Throws
/// std::domain_error if any evaluation is non-finite.
GradCheckResult finite_difference_check(const ScalarOfTensor& f, const Tensor& x,
                                        double h = kGradcheckStep);

/// Same measure over every trainable parameter of `store`, perturbing the
/// store in place (restored afterwards). `max_coords_per_param` > 0 checks an
/// evenly strided subset of each parameter's coordinates.
GradCheckResult parameter_gradient_check(const ScalarOfParams& f, ParameterStore& store,
                                         double h = kGradcheckStep,
                                         std::size_t max_coords_per_param = 0);

}  // namespace gnasforge
