#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "gnasforge/params.hpp"
#include "gnasforge/tape.hpp"

namespace gnasforge {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Classic L2: added to the raw gradient before the moment updates.
  double weight_decay = 0.0;
};

/// Adam with bias correction. Moments are created lazily per parameter name.
/// Parameters without an entry in the gradient map are left untouched, as
/// are their moments.
class Adam {
 public:
  struct Moments {
    Tensor m;
    Tensor v;
  };

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Updates every parameter of `store` that has a gradient in `grads`.
  /// Increments the step counter by one.
  void step(ParameterStore& store, const Gradients& grads);

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return step_; }
  void set_steps(std::int64_t t) { step_ = t; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace gnasforge
