// SPDX-License-Identifier: Apache-2.0
#pragma once

// Differentiable ops. Every op validates shapes up front (ShapeError) and
// rejects non-finite results (DegenerateInputError). The only implicit
// broadcasts are scalar ops and add_row, which adds a vector along the
// trailing axis.

#include <cstddef>
#include <random>
#include <vector>

#include "art/autograd.hpp"

namespace art {

template <class Real> Var<Real> matmul(const Var<Real>& a, const Var<Real>& b);
template <class Real> Var<Real> add(const Var<Real>& a, const Var<Real>& b);
template <class Real> Var<Real> sub(const Var<Real>& a, const Var<Real>& b);
template <class Real> Var<Real> mul(const Var<Real>& a, const Var<Real>& b);
template <class Real> Var<Real> scale(const Var<Real>& x, Real s);
template <class Real> Var<Real> add_scalar(const Var<Real>& x, Real c);
// x: (..., c), v: (c)
template <class Real> Var<Real> add_row(const Var<Real>& x, const Var<Real>& v);

template <class Real> Var<Real> concat(const std::vector<Var<Real>>& parts, std::size_t axis);
template <class Real> Var<Real> slice(const Var<Real>& x, std::size_t axis, std::size_t begin, std::size_t end);
template <class Real> Var<Real> reshape(const Var<Real>& x, Shape dims);
template <class Real> Var<Real> transpose(const Var<Real>& x);

template <class Real> Var<Real> sum(const Var<Real>& x);
template <class Real> Var<Real> mean_all(const Var<Real>& x);
template <class Real> Var<Real> mean(const Var<Real>& x, std::size_t axis);
// Maximum along an axis; ties resolve to the lowest index, which also
// receives the whole gradient.
template <class Real> Var<Real> max(const Var<Real>& x, std::size_t axis);

// Normalizes over the trailing axis. gamma, beta: (c).
template <class Real>
Var<Real> layer_norm(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta, Real eps = Real(1e-5));
// Exact erf form.
template <class Real> Var<Real> gelu(const Var<Real>& x);
template <class Real> Var<Real> relu(const Var<Real>& x);
template <class Real> Var<Real> softmax(const Var<Real>& x, std::size_t axis);

// logits: (n) -> scalar -log softmax(logits)[target]
template <class Real> Var<Real> cross_entropy(const Var<Real>& logits, std::size_t target);

// a, b: (n) -> scalar
template <class Real> Var<Real> cosine(const Var<Real>& a, const Var<Real>& b);
// a, b: (n, c) -> (n), row-wise cosine
template <class Real> Var<Real> cosine_rows(const Var<Real>& a, const Var<Real>& b);
// a: (m, c), b: (n, c) -> (m, n)
template <class Real> Var<Real> cosine_matrix(const Var<Real>& a, const Var<Real>& b);

// x: (n, c) -> (indices.size(), c)
template <class Real> Var<Real> gather_rows(const Var<Real>& x, const std::vector<std::size_t>& indices);
template <class Real>
Var<Real> embedding_lookup(const Var<Real>& table, const std::vector<std::size_t>& ids);

// Inverted dropout; p == 0 returns x unchanged.
template <class Real> Var<Real> dropout(const Var<Real>& x, double p, std::mt19937_64& rng);

// Raw GEMM helpers shared with tests: c (+)= a·b etc. on row-major spans.
namespace gemm {
// c[m,n] += a[m,k] * b[k,n]
template <class Real>
void nn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c);
// c[m,n] += a[m,k] * b[n,k]^T
template <class Real>
void nt(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c);
// c[m,n] += a[k,m]^T * b[k,n]
template <class Real>
void tn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c);
}  // namespace gemm

}  // namespace art
