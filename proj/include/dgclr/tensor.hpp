#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dgclr/error.hpp"

namespace dgclr {

using Shape = std::vector<std::size_t>;

inline std::size_t shapeSize(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shapeString(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

// Dense row-major array of rank 1 or 2. Rank-1 tensors behave as a single row
// (1 x n) wherever matrix semantics are needed.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() : shape_{0, 0} {}

  explicit Tensor(Shape shape, Real fill = Real(0)) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 2)
      throw ShapeError("tensor rank must be 1 or 2, got shape " + shapeString(shape_));
    values_.assign(shapeSize(shape_), fill);
  }

  Tensor(std::size_t rows, std::size_t cols, Real fill = Real(0)) : Tensor(Shape{rows, cols}, fill) {}

  Tensor(Shape shape, std::vector<Real> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_.empty() || shape_.size() > 2)
      throw ShapeError("tensor rank must be 1 or 2, got shape " + shapeString(shape_));
    if (shapeSize(shape_) != values_.size())
      throw ShapeError("tensor shape " + shapeString(shape_) + " does not match " +
                       std::to_string(values_.size()) + " values");
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<Real> values) {
    return Tensor(Shape{rows, cols}, std::move(values));
  }

  static Tensor vector(std::vector<Real> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const { return shape_.size() == 1 ? 1 : shape_[0]; }
  std::size_t cols() const { return shape_.size() == 1 ? shape_[0] : shape_[1]; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  Real& operator[](std::size_t i) { return values_[i]; }
  Real operator[](std::size_t i) const { return values_[i]; }

  std::span<Real> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const Real> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }

  std::vector<Real>& values() { return values_; }
  const std::vector<Real>& values() const { return values_; }
  Real* data() { return values_.data(); }
  const Real* data() const { return values_.data(); }

  void fill(Real v) { std::fill(values_.begin(), values_.end(), v); }

  // Same storage, different extents.
  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), values_); }

  bool allFinite() const {
    return std::all_of(values_.begin(), values_.end(), [](Real v) { return std::isfinite(v); });
  }

  bool sameShape(const Tensor& other) const { return rows() == other.rows() && cols() == other.cols(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<Real> values_;
};

template <typename Real>
void requireFinite(const Tensor<Real>& t, const std::string& what) {
  if (!t.allFinite()) throw NumericError("non-finite value in " + what);
}

}  // namespace dgclr
