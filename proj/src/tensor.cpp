#include "rcalad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rcalad/error.hpp"

namespace rcalad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)), values_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Real> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  require(numel(shape_) == values_.size(), ErrorCode::shape,
          "tensor shape " + to_string(shape_) + " does not match " +
              std::to_string(values_.size()) + " values");
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, Real fill) {
  return Tensor({rows, cols}, fill);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
  const std::size_t n = rows.size();
  const std::size_t m = n ? rows.begin()->size() : 0;
  std::vector<Real> values;
  values.reserve(n * m);
  for (const auto& r : rows) {
    require(r.size() == m, ErrorCode::shape, "ragged rows in tensor literal");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor({n, m}, std::move(values));
}

Tensor Tensor::vector(std::vector<Real> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::scalar(Real value) { return Tensor({1}, std::vector<Real>{value}); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t = matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = Real(1);
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  if (rank() == 1) return 1;
  fail(ErrorCode::shape, "rows() needs a rank-1 or rank-2 tensor, got " + to_string(shape_));
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  fail(ErrorCode::shape, "cols() needs a rank-1 or rank-2 tensor, got " + to_string(shape_));
}

Real Tensor::item() const {
  require(values_.size() == 1, ErrorCode::contract,
          "item() on tensor of shape " + to_string(shape_));
  return values_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](Real v) { return std::isfinite(v); });
}

std::span<const Real> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const Real>(values_).subspan(r * c, c);
}

Tensor Tensor::rows_subset(std::span<const std::size_t> indices) const {
  const std::size_t c = cols();
  Tensor out = matrix(indices.size(), c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < rows(), ErrorCode::contract, "row index out of range");
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(indices[i] * c), c,
                out.values_.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor out(std::move(shape));
  require(out.size() == size(), ErrorCode::shape,
          "cannot reshape " + to_string(shape_) + " to " + to_string(out.shape_));
  out.values_ = values_;
  return out;
}

void Tensor::fill(Real value) { std::fill(values_.begin(), values_.end(), value); }

} // namespace rcalad
