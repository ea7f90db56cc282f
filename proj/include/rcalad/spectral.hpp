#pragma once

#include <cstddef>

#include "rcalad/rng.hpp"
#include "rcalad/tensor.hpp"

namespace rcalad {

/// Persistent singular-vector estimates for one weight matrix W[in, out]:
/// `u` lives in the input space (length in), `v` in the output space.
struct SpectralState {
  Tensor u;
  Tensor v;

  static SpectralState random(std::size_t in, std::size_t out, RngStream& rng);
};

inline constexpr Real kSpectralFloor = Real(1e-12);

/// Refines `state` with `iters` steps of the power iteration on W^T W and
/// returns sigma = u^T W v. With iters == 1 this is exactly one classic
/// power step (v <- W^T u / |.|, u <- W v / |.|). For iters > 1 the steps
/// are accelerated by Lanczos on the Krylov space the power iterates span,
/// with full reorthogonalisation; the estimate is non-decreasing in iters
/// and never exceeds the true top singular value.
Real power_iteration(const Tensor& weight, SpectralState& state, int iters);

struct SpectralResult {
  Tensor weight;
  Real sigma;
};

/// W / sigma, where sigma comes from power_iteration(). A matrix whose
/// estimate falls below kSpectralFloor is returned unchanged.
SpectralResult spectral_normalize(const Tensor& weight, SpectralState& state, int iters);

/// sigma = u^T W v for the current state, without refining it.
Real spectral_sigma(const Tensor& weight, const SpectralState& state);

} // namespace rcalad
