#include "rcalad/spectral.hpp"

#include <algorithm>
#include <cmath>

#include "eigen_view.hpp"
#include "rcalad/error.hpp"

namespace rcalad {

using detail::ColVector;

namespace {

Tensor unit_random(std::size_t n, RngStream& rng) {
  Tensor t({n});
  Real norm = 0;
  while (norm == Real(0)) {
    for (auto& x : t.values()) x = static_cast<Real>(rng.normal());
    norm = detail::vec(t).norm();
  }
  detail::vec(t) /= norm;
  return t;
}

void check_state(const Tensor& weight, const SpectralState& state) {
  require(weight.rank() == 2, ErrorCode::shape,
          "spectral normalisation needs a matrix, got " + to_string(weight.shape()));
  require(state.u.size() == weight.rows() && state.v.size() == weight.cols(), ErrorCode::shape,
          "spectral state does not match weight " + to_string(weight.shape()));
}

} // namespace

SpectralState SpectralState::random(std::size_t in, std::size_t out, RngStream& rng) {
  SpectralState s;
  s.u = unit_random(in, rng);
  s.v = unit_random(out, rng);
  return s;
}

Real spectral_sigma(const Tensor& weight, const SpectralState& state) {
  check_state(weight, state);
  return detail::vec(state.u).dot(detail::view(weight) * detail::vec(state.v));
}

Real power_iteration(const Tensor& weight, SpectralState& state, int iters) {
  check_state(weight, state);
  require(iters >= 1, ErrorCode::config, "power iteration needs iters >= 1");
  const auto w = detail::view(weight);
  const Eigen::Index out = w.cols();

  ColVector q0 = w.transpose() * detail::vec(state.u);
  const Real start_norm = q0.norm();
  if (!(start_norm > kSpectralFloor)) return Real(0);
  q0 /= start_norm;

  const Eigen::Index max_steps = std::min<Eigen::Index>(iters, out);
  detail::RowMatrix basis(out, max_steps);  // Krylov basis in columns
  std::vector<Real> alpha, beta;
  basis.col(0) = q0;
  Eigen::Index steps = 0;
  for (Eigen::Index j = 0; j < max_steps; ++j) {
    ColVector x = w.transpose() * (w * basis.col(j));
    const Real a = basis.col(j).dot(x);
    alpha.push_back(a);
    steps = j + 1;
    if (j + 1 == max_steps) break;
    // two passes of Gram-Schmidt keep the basis orthonormal to round-off
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i <= j; ++i) x -= basis.col(i).dot(x) * basis.col(i);
    }
    const Real b = x.norm();
    if (!(b > kSpectralFloor * std::max<Real>(Real(1), std::abs(a)))) break;
    beta.push_back(b);
    basis.col(j + 1) = x / b;
  }

  ColVector ritz;
  if (steps == 1) {
    ritz = basis.col(0);
  } else {
    detail::RowMatrix t = detail::RowMatrix::Zero(steps, steps);
    for (Eigen::Index i = 0; i < steps; ++i) t(i, i) = alpha[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 0; i + 1 < steps; ++i) {
      t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<detail::RowMatrix> solver(t);
    const ColVector y = solver.eigenvectors().col(steps - 1);  // ascending order
    ritz = basis.leftCols(steps) * y;
    ritz.normalize();
  }

  ColVector u = w * ritz;
  const Real sigma = u.norm();
  if (!(sigma > kSpectralFloor)) return Real(0);
  u /= sigma;
  detail::vec(state.u) = u;
  detail::vec(state.v) = ritz;
  return sigma;
}

SpectralResult spectral_normalize(const Tensor& weight, SpectralState& state, int iters) {
  const Real sigma = power_iteration(weight, state, iters);
  if (!(sigma > kSpectralFloor)) return {weight, kSpectralFloor};
  Tensor normalized = weight;
  for (auto& x : normalized.values()) x /= sigma;
  return {std::move(normalized), sigma};
}

} // namespace rcalad
