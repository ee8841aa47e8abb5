// SPDX-License-Identifier: Apache-2.0
#include "art/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "art/kernels.hpp"

namespace art {
namespace {

template <class Real>
const kernels::Table<Real>& K() {
  return kernels::active<Real>();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <class Real>
void require_rank(const Var<Real>& x, std::size_t rank, const char* op) {
  require(x.valid() && x.dims().size() == rank,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
              (x.valid() ? shape_str(x.dims()) : std::string("<null>")));
}

template <class Real>
void require_same(const Var<Real>& a, const Var<Real>& b, const char* op) {
  require(a.dims() == b.dims(),
          std::string(op) + ": shape mismatch " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
}

// Adds `g` into the gradient buffer of `v` when v takes part in the graph.
template <class Real>
void accumulate(const Var<Real>& v, const Real* g) {
  if (!v.requires_grad()) return;
  auto& buf = v.node().grad_buffer();
  K<Real>().axpy(Real(1), g, buf.ptr(), buf.size());
}

template <class Real>
Real* grad_of(const Var<Real>& v) {
  return v.requires_grad() ? v.node().grad_buffer().ptr() : nullptr;
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& dims, std::size_t axis, const char* op) {
  require(axis < dims.size(), std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                                  shape_str(dims));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= dims[i];
  s.extent = dims[axis];
  for (std::size_t i = axis + 1; i < dims.size(); ++i) s.inner *= dims[i];
  return s;
}

template <class Real>
Real l2norm(const Real* x, std::size_t n) {
  return std::sqrt(K<Real>().dot(x, x, n));
}

}  // namespace

namespace gemm {

namespace {
template <class Real>
std::vector<Real>& scratch() {
  thread_local std::vector<Real> buf;
  return buf;
}

// dst (cols, rows) = src (rows, cols)^T
template <class Real>
void transpose_into(std::size_t rows, std::size_t cols, const Real* src, Real* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}
}  // namespace

template <class Real>
void nn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
  K<Real>().gemm(m, k, n, a, b, c);
}

template <class Real>
void nt(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
  auto& bt = scratch<Real>();
  bt.resize(k * n);
  transpose_into(n, k, b, bt.data());
  K<Real>().gemm(m, k, n, a, bt.data(), c);
}

template <class Real>
void tn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
  auto& at = scratch<Real>();
  at.resize(m * k);
  transpose_into(k, m, a, at.data());
  K<Real>().gemm(m, k, n, at.data(), b, c);
}

}  // namespace gemm

template <class Real>
Var<Real> matmul(const Var<Real>& a, const Var<Real>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dims disagree " + shape_str(a.dims()) + " x " + shape_str(b.dims()));
  Tensor<Real> out({m, n});
  gemm::nn(m, k, n, a.value().ptr(), b.value().ptr(), out.ptr());
  return make_result<Real>(std::move(out), "matmul", {&a, &b}, [a, b, m, k, n](Node<Real>& self) {
    const Real* g = self.grad.ptr();
    if (Real* ga = grad_of(a)) gemm::nt(m, n, k, g, b.value().ptr(), ga);
    if (Real* gb = grad_of(b)) gemm::tn(k, m, n, a.value().ptr(), g, gb);
  });
}

template <class Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
  require_same(a, b, "add");
  Tensor<Real> out(a.dims());
  K<Real>().add(a.value().ptr(), b.value().ptr(), out.ptr(), out.size());
  return make_result<Real>(std::move(out), "add", {&a, &b}, [a, b](Node<Real>& self) {
    accumulate(a, self.grad.ptr());
    accumulate(b, self.grad.ptr());
  });
}

template <class Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b) {
  require_same(a, b, "sub");
  Tensor<Real> out(a.dims());
  const Real* pa = a.value().ptr();
  const Real* pb = b.value().ptr();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
  return make_result<Real>(std::move(out), "sub", {&a, &b}, [a, b](Node<Real>& self) {
    accumulate(a, self.grad.ptr());
    if (Real* gb = grad_of(b)) K<Real>().axpy(Real(-1), self.grad.ptr(), gb, self.grad.size());
  });
}

template <class Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) {
  require_same(a, b, "mul");
  Tensor<Real> out(a.dims());
  K<Real>().mul(a.value().ptr(), b.value().ptr(), out.ptr(), out.size());
  return make_result<Real>(std::move(out), "mul", {&a, &b}, [a, b](Node<Real>& self) {
    const std::size_t n = self.grad.size();
    const Real* g = self.grad.ptr();
    if (Real* ga = grad_of(a)) {
      const Real* pb = b.value().ptr();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * pb[i];
    }
    if (Real* gb = grad_of(b)) {
      const Real* pa = a.value().ptr();
      for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * pa[i];
    }
  });
}

template <class Real>
Var<Real> scale(const Var<Real>& x, Real s) {
  Tensor<Real> out(x.dims());
  K<Real>().scale(s, x.value().ptr(), out.ptr(), out.size());
  return make_result<Real>(std::move(out), "scale", {&x}, [x, s](Node<Real>& self) {
    if (Real* gx = grad_of(x)) K<Real>().axpy(s, self.grad.ptr(), gx, self.grad.size());
  });
}

template <class Real>
Var<Real> add_scalar(const Var<Real>& x, Real c) {
  Tensor<Real> out = x.value();
  for (auto& v : out.data()) v += c;
  return make_result<Real>(std::move(out), "add_scalar", {&x},
                           [x](Node<Real>& self) { accumulate(x, self.grad.ptr()); });
}

template <class Real>
Var<Real> add_row(const Var<Real>& x, const Var<Real>& v) {
  require_rank(v, 1, "add_row");
  require(x.valid() && x.dims().size() >= 1 && x.dims().back() == v.dim(0),
          "add_row: trailing axis of " + shape_str(x.dims()) + " must equal " + shape_str(v.dims()));
  const std::size_t c = v.dim(0);
  const std::size_t rows = x.size() / c;
  Tensor<Real> out(x.dims());
  for (std::size_t r = 0; r < rows; ++r)
    K<Real>().add(x.value().ptr() + r * c, v.value().ptr(), out.ptr() + r * c, c);
  return make_result<Real>(std::move(out), "add_row", {&x, &v}, [x, v, rows, c](Node<Real>& self) {
    accumulate(x, self.grad.ptr());
    if (Real* gv = grad_of(v))
      for (std::size_t r = 0; r < rows; ++r) K<Real>().axpy(Real(1), self.grad.ptr() + r * c, gv, c);
  });
}

template <class Real>
Var<Real> concat(const std::vector<Var<Real>>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts.front().dims();
  require(axis < first.size(), "concat: axis out of range for " + shape_str(first));
  Shape out_dims = first;
  out_dims[axis] = 0;
  for (const auto& p : parts) {
    require(p.dims().size() == first.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i)
      if (i != axis)
        require(p.dims()[i] == first[i],
                "concat: shape mismatch " + shape_str(p.dims()) + " vs " + shape_str(first));
    out_dims[axis] += p.dims()[axis];
  }
  const AxisSplit os = split_axis(out_dims, axis, "concat");
  Tensor<Real> out(out_dims);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t ext = p.dims()[axis];
    const std::size_t block = ext * os.inner;
    for (std::size_t o = 0; o < os.outer; ++o)
      std::copy_n(p.value().ptr() + o * block, block, out.ptr() + (o * os.extent + off) * os.inner);
    off += ext;
  }
  return make_result<Real>(std::move(out), "concat", parts, [parts, offsets, os, axis](Node<Real>& self) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      Real* gp = grad_of(parts[i]);
      if (!gp) continue;
      const std::size_t block = parts[i].dims()[axis] * os.inner;
      for (std::size_t o = 0; o < os.outer; ++o)
        K<Real>().axpy(Real(1), self.grad.ptr() + (o * os.extent + offsets[i]) * os.inner, gp + o * block,
                       block);
    }
  });
}

template <class Real>
Var<Real> slice(const Var<Real>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_axis(x.dims(), axis, "slice");
  require(begin <= end && end <= s.extent,
          "slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") outside " +
              shape_str(x.dims()));
  Shape dims = x.dims();
  dims[axis] = end - begin;
  Tensor<Real> out(dims);
  const std::size_t block = (end - begin) * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(x.value().ptr() + (o * s.extent + begin) * s.inner, block, out.ptr() + o * block);
  return make_result<Real>(std::move(out), "slice", {&x}, [x, s, begin, block](Node<Real>& self) {
    if (Real* gx = grad_of(x))
      for (std::size_t o = 0; o < s.outer; ++o)
        K<Real>().axpy(Real(1), self.grad.ptr() + o * block, gx + (o * s.extent + begin) * s.inner, block);
  });
}

template <class Real>
Var<Real> reshape(const Var<Real>& x, Shape dims) {
  Tensor<Real> out = x.value().reshaped(std::move(dims));
  return make_result<Real>(std::move(out), "reshape", {&x},
                           [x](Node<Real>& self) { accumulate(x, self.grad.ptr()); });
}

template <class Real>
Var<Real> transpose(const Var<Real>& x) {
  require_rank(x, 2, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor<Real> out({n, m});
  const Real* px = x.value().ptr();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = px[i * n + j];
  return make_result<Real>(std::move(out), "transpose", {&x}, [x, m, n](Node<Real>& self) {
    if (Real* gx = grad_of(x))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += self.grad[j * m + i];
  });
}

template <class Real>
Var<Real> sum(const Var<Real>& x) {
  const Real s = K<Real>().sum(x.value().ptr(), x.size());
  return make_result<Real>(Tensor<Real>::scalar(s), "sum", {&x}, [x](Node<Real>& self) {
    if (Real* gx = grad_of(x)) {
      const Real g = self.grad[0];
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g;
    }
  });
}

template <class Real>
Var<Real> mean_all(const Var<Real>& x) {
  require(x.size() > 0, "mean_all: empty tensor");
  const Real inv = Real(1) / static_cast<Real>(x.size());
  const Real s = K<Real>().sum(x.value().ptr(), x.size()) * inv;
  return make_result<Real>(Tensor<Real>::scalar(s), "mean_all", {&x}, [x, inv](Node<Real>& self) {
    if (Real* gx = grad_of(x)) {
      const Real g = self.grad[0] * inv;
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g;
    }
  });
}

template <class Real>
Var<Real> mean(const Var<Real>& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.dims(), axis, "mean");
  require(s.extent > 0, "mean: empty axis");
  Shape dims = x.dims();
  dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor<Real> out(dims);
  const Real inv = Real(1) / static_cast<Real>(s.extent);
  const Real* px = x.value().ptr();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      K<Real>().axpy(inv, px + (o * s.extent + e) * s.inner, out.ptr() + o * s.inner, s.inner);
  return make_result<Real>(std::move(out), "mean", {&x}, [x, s, inv](Node<Real>& self) {
    if (Real* gx = grad_of(x))
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e)
          K<Real>().axpy(inv, self.grad.ptr() + o * s.inner, gx + (o * s.extent + e) * s.inner, s.inner);
  });
}

template <class Real>
Var<Real> max(const Var<Real>& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.dims(), axis, "max");
  require(s.extent > 0, "max: empty axis");
  Shape dims = x.dims();
  dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor<Real> out(dims);
  std::vector<std::size_t> arg(s.outer * s.inner);
  const Real* px = x.value().ptr();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = 0;
      Real bv = px[o * s.extent * s.inner + i];
      for (std::size_t e = 1; e < s.extent; ++e) {
        const Real v = px[(o * s.extent + e) * s.inner + i];
        if (v > bv) {
          bv = v;
          best = e;
        }
      }
      out[o * s.inner + i] = bv;
      arg[o * s.inner + i] = best;
    }
  return make_result<Real>(std::move(out), "max", {&x}, [x, s, arg](Node<Real>& self) {
    if (Real* gx = grad_of(x))
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i)
          gx[(o * s.extent + arg[o * s.inner + i]) * s.inner + i] += self.grad[o * s.inner + i];
  });
}

template <class Real>
Var<Real> layer_norm(const Var<Real>& x, const Var<Real>& gamma, const Var<Real>& beta, Real eps) {
  require_rank(gamma, 1, "layer_norm");
  require_same(gamma, beta, "layer_norm");
  require(x.valid() && !x.dims().empty() && x.dims().back() == gamma.dim(0),
          "layer_norm: trailing axis of " + shape_str(x.dims()) + " must equal " + shape_str(gamma.dims()));
  const std::size_t c = gamma.dim(0);
  const std::size_t rows = x.size() / c;
  Tensor<Real> out(x.dims());
  Tensor<Real> xhat(x.dims());
  std::vector<Real> inv_std(rows);
  const Real* px = x.value().ptr();
  const Real* pg = gamma.value().ptr();
  const Real* pb = beta.value().ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = px + r * c;
    Real mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<Real>(c);
    Real var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<Real>(c);
    const Real is = Real(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const Real h = (xr[j] - mu) * is;
      xhat[r * c + j] = h;
      out[r * c + j] = h * pg[j] + pb[j];
    }
  }
  return make_result<Real>(
      std::move(out), "layer_norm", {&x, &gamma, &beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, c](Node<Real>& self) {
        const Real* g = self.grad.ptr();
        const Real* pg = gamma.value().ptr();
        Real* gg = grad_of(gamma);
        Real* gb = grad_of(beta);
        Real* gx = grad_of(x);
        std::vector<Real> dxhat(c);
        for (std::size_t r = 0; r < rows; ++r) {
          const Real* gr = g + r * c;
          const Real* hr = xhat.ptr() + r * c;
          if (gg)
            for (std::size_t j = 0; j < c; ++j) gg[j] += gr[j] * hr[j];
          if (gb)
            for (std::size_t j = 0; j < c; ++j) gb[j] += gr[j];
          if (!gx) continue;
          Real m1 = 0, m2 = 0;
          for (std::size_t j = 0; j < c; ++j) {
            dxhat[j] = gr[j] * pg[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * hr[j];
          }
          m1 /= static_cast<Real>(c);
          m2 /= static_cast<Real>(c);
          for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += inv_std[r] * (dxhat[j] - m1 - hr[j] * m2);
        }
      });
}

template <class Real>
Var<Real> gelu(const Var<Real>& x) {
  Tensor<Real> out(x.dims());
  const Real* px = x.value().ptr();
  const Real inv_sqrt2 = Real(1) / std::numbers::sqrt2_v<Real>;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Real(0.5) * px[i] * (Real(1) + std::erf(px[i] * inv_sqrt2));
  return make_result<Real>(std::move(out), "gelu", {&x}, [x, inv_sqrt2](Node<Real>& self) {
    Real* gx = grad_of(x);
    if (!gx) return;
    const Real* px = x.value().ptr();
    const Real inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<Real> * inv_sqrt2;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const Real v = px[i];
      const Real d = Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(Real(-0.5) * v * v);
      gx[i] += self.grad[i] * d;
    }
  });
}

template <class Real>
Var<Real> relu(const Var<Real>& x) {
  Tensor<Real> out(x.dims());
  const Real* px = x.value().ptr();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] > Real(0) ? px[i] : Real(0);
  return make_result<Real>(std::move(out), "relu", {&x}, [x](Node<Real>& self) {
    Real* gx = grad_of(x);
    if (!gx) return;
    const Real* px = x.value().ptr();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (px[i] > Real(0)) gx[i] += self.grad[i];
  });
}

template <class Real>
Var<Real> softmax(const Var<Real>& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.dims(), axis, "softmax");
  require(s.extent > 0, "softmax: empty axis");
  Tensor<Real> out(x.dims());
  const Real* px = x.value().ptr();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      Real m = px[base];
      for (std::size_t e = 1; e < s.extent; ++e) m = std::max(m, px[base + e * s.inner]);
      Real z = 0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const Real v = std::exp(px[base + e * s.inner] - m);
        out[base + e * s.inner] = v;
        z += v;
      }
      const Real inv = Real(1) / z;
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] *= inv;
    }
  // The backward needs the output values; they live on the node itself.
  return make_result<Real>(std::move(out), "softmax", {&x}, [x, s](Node<Real>& self) {
    Real* gx = grad_of(x);
    if (!gx) return;
    const Real* y = self.value.ptr();
    const Real* g = self.grad.ptr();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        Real dotp = 0;
        for (std::size_t e = 0; e < s.extent; ++e) dotp += g[base + e * s.inner] * y[base + e * s.inner];
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t at = base + e * s.inner;
          gx[at] += y[at] * (g[at] - dotp);
        }
      }
  });
}

template <class Real>
Var<Real> cross_entropy(const Var<Real>& logits, std::size_t target) {
  require_rank(logits, 1, "cross_entropy");
  const std::size_t n = logits.dim(0);
  require(n > 0, "cross_entropy: empty logits");
  if (target >= n)
    throw ContractError("cross_entropy: target " + std::to_string(target) + " out of range for " +
                        std::to_string(n) + " classes");
  const Real* z = logits.value().ptr();
  const Real m = *std::max_element(z, z + n);
  std::vector<Real> p(n);
  Real total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp(z[i] - m);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  const Real loss = std::log(total) + m - z[target];
  return make_result<Real>(Tensor<Real>::scalar(loss), "cross_entropy", {&logits},
                           [logits, p = std::move(p), target](Node<Real>& self) {
                             Real* gz = grad_of(logits);
                             if (!gz) return;
                             const Real g = self.grad[0];
                             for (std::size_t i = 0; i < p.size(); ++i)
                               gz[i] += g * (p[i] - (i == target ? Real(1) : Real(0)));
                           });
}

namespace {

// Accumulates d cos(a,b) into ga / gb scaled by g.
template <class Real>
void cosine_pair_backward(const Real* a, const Real* b, std::size_t c, Real na, Real nb, Real cosv, Real g,
                          Real* ga, Real* gb) {
  const Real inv = Real(1) / (na * nb);
  if (ga) {
    const Real ka = -cosv / (na * na);
    for (std::size_t j = 0; j < c; ++j) ga[j] += g * (b[j] * inv + a[j] * ka);
  }
  if (gb) {
    const Real kb = -cosv / (nb * nb);
    for (std::size_t j = 0; j < c; ++j) gb[j] += g * (a[j] * inv + b[j] * kb);
  }
}

template <class Real>
std::vector<Real> row_norms(const Var<Real>& x, std::size_t rows, std::size_t c, const char* op) {
  std::vector<Real> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = l2norm(x.value().ptr() + r * c, c);
    if (!(out[r] > Real(0)))
      throw DegenerateInputError(std::string(op) + ": zero-norm input row " + std::to_string(r));
  }
  return out;
}

}  // namespace

template <class Real>
Var<Real> cosine(const Var<Real>& a, const Var<Real>& b) {
  require_rank(a, 1, "cosine");
  require_same(a, b, "cosine");
  const std::size_t c = a.dim(0);
  const Real na = row_norms(a, 1, c, "cosine")[0];
  const Real nb = row_norms(b, 1, c, "cosine")[0];
  const Real cosv = K<Real>().dot(a.value().ptr(), b.value().ptr(), c) / (na * nb);
  return make_result<Real>(Tensor<Real>::scalar(cosv), "cosine", {&a, &b},
                           [a, b, c, na, nb, cosv](Node<Real>& self) {
                             cosine_pair_backward(a.value().ptr(), b.value().ptr(), c, na, nb, cosv, self.grad[0],
                                                  grad_of(a), grad_of(b));
                           });
}

template <class Real>
Var<Real> cosine_rows(const Var<Real>& a, const Var<Real>& b) {
  require_rank(a, 2, "cosine_rows");
  require_same(a, b, "cosine_rows");
  const std::size_t n = a.dim(0), c = a.dim(1);
  auto na = row_norms(a, n, c, "cosine_rows");
  auto nb = row_norms(b, n, c, "cosine_rows");
  Tensor<Real> out({n});
  for (std::size_t r = 0; r < n; ++r)
    out[r] = K<Real>().dot(a.value().ptr() + r * c, b.value().ptr() + r * c, c) / (na[r] * nb[r]);
  return make_result<Real>(std::move(out), "cosine_rows", {&a, &b}, [a, b, n, c, na, nb](Node<Real>& self) {
    Real* ga = grad_of(a);
    Real* gb = grad_of(b);
    for (std::size_t r = 0; r < n; ++r)
      cosine_pair_backward(a.value().ptr() + r * c, b.value().ptr() + r * c, c, na[r], nb[r], self.value[r],
                           self.grad[r], ga ? ga + r * c : nullptr, gb ? gb + r * c : nullptr);
  });
}

template <class Real>
Var<Real> cosine_matrix(const Var<Real>& a, const Var<Real>& b) {
  require_rank(a, 2, "cosine_matrix");
  require_rank(b, 2, "cosine_matrix");
  require(a.dim(1) == b.dim(1),
          "cosine_matrix: width mismatch " + shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  const std::size_t m = a.dim(0), n = b.dim(0), c = a.dim(1);
  auto na = row_norms(a, m, c, "cosine_matrix");
  auto nb = row_norms(b, n, c, "cosine_matrix");
  Tensor<Real> out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = K<Real>().dot(a.value().ptr() + i * c, b.value().ptr() + j * c, c) / (na[i] * nb[j]);
  return make_result<Real>(std::move(out), "cosine_matrix", {&a, &b},
                           [a, b, m, n, c, na, nb](Node<Real>& self) {
                             Real* ga = grad_of(a);
                             Real* gb = grad_of(b);
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j)
                                 cosine_pair_backward(a.value().ptr() + i * c, b.value().ptr() + j * c, c, na[i],
                                                      nb[j], self.value[i * n + j], self.grad[i * n + j],
                                                      ga ? ga + i * c : nullptr, gb ? gb + j * c : nullptr);
                           });
}

template <class Real>
Var<Real> gather_rows(const Var<Real>& x, const std::vector<std::size_t>& indices) {
  require_rank(x, 2, "gather_rows");
  const std::size_t n = x.dim(0), c = x.dim(1);
  Tensor<Real> out({indices.size(), c});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= n)
      throw ShapeError("gather_rows: index " + std::to_string(indices[r]) + " out of range for " +
                       shape_str(x.dims()));
    std::copy_n(x.value().ptr() + indices[r] * c, c, out.ptr() + r * c);
  }
  return make_result<Real>(std::move(out), "gather_rows", {&x}, [x, indices, c](Node<Real>& self) {
    if (Real* gx = grad_of(x))
      for (std::size_t r = 0; r < indices.size(); ++r)
        K<Real>().axpy(Real(1), self.grad.ptr() + r * c, gx + indices[r] * c, c);
  });
}

template <class Real>
Var<Real> embedding_lookup(const Var<Real>& table, const std::vector<std::size_t>& ids) {
  return gather_rows(table, ids);
}

template <class Real>
Var<Real> dropout(const Var<Real>& x, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: probability must be in [0, 1)");
  if (p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const Real k = static_cast<Real>(1.0 / (1.0 - p));
  Tensor<Real> mask(x.dims());
  for (auto& m : mask.data()) m = keep(rng) ? k : Real(0);
  Tensor<Real> out(x.dims());
  K<Real>().mul(x.value().ptr(), mask.ptr(), out.ptr(), out.size());
  return make_result<Real>(std::move(out), "dropout", {&x}, [x, mask = std::move(mask)](Node<Real>& self) {
    if (Real* gx = grad_of(x))
      for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += self.grad[i] * mask[i];
  });
}

#define ART_INSTANTIATE(R)                                                                            \
  template Var<R> matmul(const Var<R>&, const Var<R>&);                                               \
  template Var<R> add(const Var<R>&, const Var<R>&);                                                  \
  template Var<R> sub(const Var<R>&, const Var<R>&);                                                  \
  template Var<R> mul(const Var<R>&, const Var<R>&);                                                  \
  template Var<R> scale(const Var<R>&, R);                                                            \
  template Var<R> add_scalar(const Var<R>&, R);                                                       \
  template Var<R> add_row(const Var<R>&, const Var<R>&);                                              \
  template Var<R> concat(const std::vector<Var<R>>&, std::size_t);                                    \
  template Var<R> slice(const Var<R>&, std::size_t, std::size_t, std::size_t);                        \
  template Var<R> reshape(const Var<R>&, Shape);                                                      \
  template Var<R> transpose(const Var<R>&);                                                           \
  template Var<R> sum(const Var<R>&);                                                                 \
  template Var<R> mean_all(const Var<R>&);                                                            \
  template Var<R> mean(const Var<R>&, std::size_t);                                                   \
  template Var<R> max(const Var<R>&, std::size_t);                                                    \
  template Var<R> layer_norm(const Var<R>&, const Var<R>&, const Var<R>&, R);                         \
  template Var<R> gelu(const Var<R>&);                                                                \
  template Var<R> relu(const Var<R>&);                                                                \
  template Var<R> softmax(const Var<R>&, std::size_t);                                                \
  template Var<R> cross_entropy(const Var<R>&, std::size_t);                                          \
  template Var<R> cosine(const Var<R>&, const Var<R>&);                                               \
  template Var<R> cosine_rows(const Var<R>&, const Var<R>&);                                          \
  template Var<R> cosine_matrix(const Var<R>&, const Var<R>&);                                        \
  template Var<R> gather_rows(const Var<R>&, const std::vector<std::size_t>&);                        \
  template Var<R> embedding_lookup(const Var<R>&, const std::vector<std::size_t>&);                   \
  template Var<R> dropout(const Var<R>&, double, std::mt19937_64&);                                   \
  template void gemm::nn(std::size_t, std::size_t, std::size_t, const R*, const R*, R*);              \
  template void gemm::nt(std::size_t, std::size_t, std::size_t, const R*, const R*, R*);              \
  template void gemm::tn(std::size_t, std::size_t, std::size_t, const R*, const R*, R*);

ART_INSTANTIATE(float)
ART_INSTANTIATE(double)
#undef ART_INSTANTIATE

}  // namespace art
