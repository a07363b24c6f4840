#include "gnasforge/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "gnasforge/kernels.hpp"

namespace gnasforge {

void Adam::step(ParameterStore& store, const Gradients& grads) {
  ++step_;
  const double t = static_cast<double>(step_);
  const kernels::AdamCoefficients c{config_.lr,
                                    config_.beta1,
                                    1.0 - config_.beta1,
                                    config_.beta2,
                                    1.0 - config_.beta2,
                                    1.0 - std::pow(config_.beta1, t),
                                    1.0 - std::pow(config_.beta2, t),
                                    config_.epsilon,
                                    config_.weight_decay};
  for (const auto& [name, param] : store.entries()) {
    auto g = grads.find(name);
    if (g == grads.end() || !param.trainable) continue;
    Tensor& p = store.value(name);
    if (g->second.shape() != p.shape()) {
      throw std::invalid_argument("Adam: gradient for '" + name + "' has shape " +
                                  shape_string(g->second.shape()) + ", parameter has " +
                                  shape_string(p.shape()));
    }
    auto [it, fresh] = moments_.try_emplace(name);
    if (fresh) it->second = Moments{Tensor(p.shape(), 0.0), Tensor(p.shape(), 0.0)};
    kernels::active().adam(p.numel(), c, p.data().data(), g->second.data().data(),
                           it->second.m.data().data(), it->second.v.data().data());
  }
}

}  // namespace gnasforge
