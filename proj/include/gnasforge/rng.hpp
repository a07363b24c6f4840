#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace gnasforge {

/// Seeded random stream. Draws are derived from the raw mt19937_64 output
/// with fixed arithmetic rather than the std distributions, whose algorithms
/// differ between standard libraries; the same seed gives the same stream on
/// every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// (0, 1), never exactly 0 or 1.
  double uniform_open() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Gumbel(0, 1) sample: -log(-log(u)).
  double gumbel() { return -std::log(-std::log(uniform_open())); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gnasforge
