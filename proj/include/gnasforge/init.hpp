#pragma once

#include <cmath>

#include "gnasforge/rng.hpp"
#include "gnasforge/tensor.hpp"

namespace gnasforge {

/// Glorot/Xavier uniform: U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                             std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::matrix(rows, cols);
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

/// Weight matrix stored input-major ([fan_in, fan_out]) so that x * W maps
/// row features.
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return glorot_uniform(fan_in, fan_out, fan_in, fan_out, rng);
}

}  // namespace gnasforge
