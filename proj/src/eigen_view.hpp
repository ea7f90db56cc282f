#pragma once

#include <Eigen/Dense>

#include "rcalad/tensor.hpp"

namespace rcalad::detail {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

inline Eigen::Map<const RowMatrix> view(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

inline Eigen::Map<RowMatrix> view(Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

inline Eigen::Map<const ColVector> vec(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.size())};
}

inline Eigen::Map<ColVector> vec(Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.size())};
}

} // namespace rcalad::detail
