#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rcalad/tape.hpp"

namespace rcalad {

struct AdamConfig {
  Real lr = Real(1e-5);
  Real beta1 = Real(0.5);
  Real beta2 = Real(0.999);
  Real epsilon = Real(1e-8);
};

/// Adaptive-moment state for one group of parameters.
struct OptimizerState {
  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  static OptimizerState for_shapes(const AdamConfig& config, std::span<const Shape> shapes);
};

/// One bias-corrected Adam update of `params` in place. Shapes of params,
/// grads and state must agree.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               OptimizerState& state);

/// Convenience: steps every parameter with its own `grad` buffer.
void adam_step(std::span<Parameter* const> params, OptimizerState& state);

OptimizerState make_optimizer_state(const AdamConfig& config, std::span<Parameter* const> params);

} // namespace rcalad
