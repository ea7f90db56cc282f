#pragma once

#include <functional>
#include <span>

#include "rcalad/tape.hpp"

namespace rcalad {

/// Builds a scalar on `tape` from a differentiable leaf holding `point`.
using ScalarGraph = std::function<Var(Tape& tape, Var input)>;

struct GradCheckResult {
  Real max_relative_error = 0;
  /// Coordinates whose +-step evaluations land on a different side of a
  /// kink than the point itself (a relu/lrelu input changing sign, or a
  /// clamp switching between pass-through and saturated). Central
  /// differences are not valid there; they still count toward the max.
  std::size_t nonsmooth = 0;
  /// Max over the remaining coordinates (equal to max_relative_error when
  /// nonsmooth is 0).
  Real smooth_max_relative_error = 0;
  Tensor analytic;
  Tensor numeric;
};

/// Compares reverse-mode gradients with central differences of the given
/// step. Relative error per coordinate is
/// |analytic - numeric| / max(|analytic|, 1e-8); the maximum is reported.
GradCheckResult grad_check(const ScalarGraph& f, const Tensor& point, Real step = Real(1e-4));

} // namespace rcalad

namespace rcalad {

/// Same comparison over the entries of `params`, which the graph must bind
/// through Tape::parameter(). Values are perturbed in place and restored.
/// A non-zero `max_coordinates` checks an evenly strided subset.
GradCheckResult grad_check_parameters(const std::function<Var(Tape&)>& f,
                                      std::span<Parameter* const> params, Real step = Real(1e-4),
                                      std::size_t max_coordinates = 0);

} // namespace rcalad
