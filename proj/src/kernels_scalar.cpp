// SPDX-License-Identifier: Apache-2.0
#include "art/kernels.hpp"

namespace art::kernels::scalar {
namespace {

template <class Real>
Real dot(const Real* x, const Real* y, std::size_t n) {
  Real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class Real>
void axpy(Real alpha, const Real* x, Real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class Real>
void add(const Real* a, const Real* b, Real* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class Real>
void mul(const Real* a, const Real* b, Real* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class Real>
void scale(Real alpha, const Real* x, Real* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <class Real>
Real sum(const Real* x, std::size_t n) {
  Real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <class Real>
void gemm(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
}

}  // namespace

template <class Real>
const Table<Real>& table() {
  static const Table<Real> t{&dot<Real>,   &axpy<Real>, &add<Real>, &mul<Real>,
                             &scale<Real>, &sum<Real>,  &gemm<Real>};
  return t;
}

template const Table<float>& table<float>();
template const Table<double>& table<double>();

}  // namespace art::kernels::scalar
