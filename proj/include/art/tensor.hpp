// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "art/error.hpp"

namespace art {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& dims);

// Dense row-major array. Plain value type: copies are deep.
template <class Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  explicit Tensor(Shape dims, Real fill = Real(0))
      : dims_(std::move(dims)), data_(shape_size(dims_), fill) {}
  Tensor(Shape dims, std::vector<Real> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (shape_size(dims_) != data_.size())
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims " + shape_str(dims_));
  }

  static Tensor scalar(Real v) { return Tensor(Shape{}, std::vector<Real>{v}); }

  const Shape& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty() && dims_.empty(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  Real* ptr() { return data_.data(); }
  const Real* ptr() const { return data_.data(); }
  std::vector<Real>& storage() { return data_; }
  const std::vector<Real>& storage() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real& operator()(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
  Real operator()(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }

  Real item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of dims " + shape_str(dims_));
    return data_[0];
  }

  Tensor reshaped(Shape dims) const {
    if (shape_size(dims) != data_.size())
      throw ShapeError("cannot reshape " + shape_str(dims_) + " to " + shape_str(dims));
    return Tensor(std::move(dims), data_);
  }

  bool all_finite() const {
    for (Real v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  template <class Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(dims_, std::vector<Other>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  Shape dims_;
  std::vector<Real> data_;
};

}  // namespace art
