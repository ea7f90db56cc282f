#pragma once

#include <span>
#include <string_view>

#include "rcalad/rng.hpp"
#include "rcalad/spectral.hpp"
#include "rcalad/tape.hpp"

namespace rcalad {

enum class Mode { train, eval };

enum class Activation { lrelu, relu, tanh, sigmoid, none };

inline constexpr Real kDefaultLeakySlope = Real(0.2);

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation kind);

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  Real momentum = Real(0.9);
  Real epsilon = Real(1e-5);

  static BatchNormStats fresh(std::size_t features);
};

// Layer primitives. Shapes are (batch, features) unless stated otherwise.

/// x[n,in] * W[in,out] + b[out]
Var affine(Var x, Var weight, Var bias);
Var activation(Activation kind, Var x, Real slope = kDefaultLeakySlope);
/// Rank-1 parts join on axis 0; rank-2 parts on axis 0 or 1.
Var concat(std::span<const Var> parts, std::size_t axis = 1);
/// Inverted dropout; identity in eval mode or at rate 0.
Var dropout(Var x, Real rate, Mode mode, RngStream& rng);
/// Train mode normalises with biased batch statistics and folds them into
/// the running averages; eval mode uses the running averages only.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormStats& stats, Mode mode);
/// W / (u^T W v) with u, v held constant; passes W through when the
/// estimate is below kSpectralFloor.
Var spectral_norm(Var weight, const SpectralState& state);

// Elementwise and reduction helpers used to assemble losses.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, Real factor);
Var log(Var a);
Var one_minus(Var a);
Var clamp(Var a, Real lo, Real hi);
Var mean(Var a);
Var sum(Var a);

} // namespace rcalad
