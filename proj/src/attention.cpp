// SPDX-License-Identifier: Apache-2.0
#include "art/attention.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "art/kernels.hpp"

namespace art {

void AttentionDims::validate() const {
  if (model_dim == 0 || latent_dim == 0 || heads == 0)
    throw ContractError("attention dims must be positive");
  if (latent_dim % heads != 0)
    throw ConfigError("latent dim " + std::to_string(latent_dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  if (ffn_hidden == 0) throw ConfigError("ffn hidden width must be positive");
}

namespace {

template <class Real>
Var<Real> linear(const Var<Real>& x, const Var<Real>& w) {
  return matmul(x, w);
}

template <class Real>
Var<Real> linear(const Var<Real>& x, const Var<Real>& w, const Var<Real>& b) {
  return add_row(matmul(x, w), b);
}

template <class Real>
void require_finite(const Var<Real>& x, const char* what) {
  if (!x.value().all_finite()) throw DegenerateInputError(std::string(what) + ": non-finite input");
}

template <class Real>
void add_layer_norm(ParamStore<Real>& params, const std::string& name, std::size_t c) {
  params.add(name + ".g", Tensor<Real>({c}, Real(1)));
  params.add(name + ".b", Tensor<Real>({c}, Real(0)));
}

}  // namespace

template <class Real>
Var<Real> scaled_dot_attention(const Var<Real>& q, const Var<Real>& k, const Var<Real>& v, const Tensor<Real>* mask,
                               Var<Real>* weights) {
  if (q.dims().size() != 2 || k.dims().size() != 2 || v.dims().size() != 2)
    throw ShapeError("scaled_dot_attention: expected rank-2 inputs");
  const std::size_t d = q.dim(1);
  if (d == 0) throw ContractError("scaled_dot_attention: latent width d must be positive");
  if (k.dim(1) != d || k.dim(0) != v.dim(0))
    throw ShapeError("scaled_dot_attention: shapes disagree " + shape_str(q.dims()) + " " + shape_str(k.dims()) +
                     " " + shape_str(v.dims()));
  if (k.dim(0) == 0) throw ContractError("scaled_dot_attention: empty key set");
  Var<Real> scores = scale(matmul(q, transpose(k)), Real(1) / std::sqrt(static_cast<Real>(d)));
  if (mask) {
    if (mask->dims() != scores.dims())
      throw ShapeError("scaled_dot_attention: mask dims " + shape_str(mask->dims()) + " vs scores " +
                       shape_str(scores.dims()));
    scores = add(scores, Var<Real>::constant(*mask));
  }
  Var<Real> w = softmax(scores, 1);
  if (weights) *weights = w;
  return matmul(w, v);
}

namespace {

// Head h's columns of a (rows, width) matrix, copied row-major (rows, hd)
// or transposed (hd, rows).
template <class Real>
void gather_head(const Real* src, std::size_t rows, std::size_t width, std::size_t off, std::size_t hd, Real* dst,
                 bool transposed) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < hd; ++c) {
      const Real v = src[r * width + off + c];
      if (transposed)
        dst[c * rows + r] = v;
      else
        dst[r * hd + c] = v;
    }
}

template <class Real>
void scatter_head_add(const Real* src, std::size_t rows, std::size_t width, std::size_t off, std::size_t hd, Real* dst,
                      bool transposed) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < hd; ++c) dst[r * width + off + c] += transposed ? src[c * rows + r] : src[r * hd + c];
}

}  // namespace

// One tape node for all heads. Per head, with S = Q_h K_h^T / sqrt(hd) + mask
// and P = softmax(S): O_h = P V_h. The backward is the usual
//   dV_h = P^T dO_h,  dP = dO_h V_h^T,  dS = P * (dP - rowsum(dP * P)),
//   dQ_h = dS K_h / sqrt(hd),  dK_h = dS^T Q_h / sqrt(hd).
template <class Real>
Var<Real> multi_head_attention(const Var<Real>& q, const Var<Real>& k, const Var<Real>& v, std::size_t heads,
                               const Tensor<Real>* mask, Tensor<Real>* mean_weights) {
  if (q.dims().size() != 2 || k.dims().size() != 2 || v.dims().size() != 2)
    throw ShapeError("multi_head_attention: expected rank-2 inputs");
  const std::size_t width = q.dim(1), nq = q.dim(0), nk = k.dim(0);
  if (heads == 0 || width == 0 || width % heads != 0)
    throw ShapeError("multi_head_attention: width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  if (k.dim(1) != width || v.dim(1) != width || v.dim(0) != nk)
    throw ShapeError("multi_head_attention: shapes disagree " + shape_str(q.dims()) + " " + shape_str(k.dims()) +
                     " " + shape_str(v.dims()));
  if (nk == 0) throw ContractError("multi_head_attention: empty key set");
  if (mask && mask->dims() != Shape{nq, nk})
    throw ShapeError("multi_head_attention: mask dims " + shape_str(mask->dims()) + " vs scores " +
                     shape_str(Shape{nq, nk}));
  const std::size_t hd = width / heads;
  const Real sc = Real(1) / std::sqrt(static_cast<Real>(hd));

  auto probs = std::make_shared<std::vector<Real>>(heads * nq * nk);
  Tensor<Real> out({nq, width});
  std::vector<Real> qh(nq * hd), kt(hd * nk), vt(hd * nk), oh(nq * hd);
  const auto& kern = kernels::active<Real>();
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * hd;
    gather_head(q.value().ptr(), nq, width, off, hd, qh.data(), false);
    gather_head(k.value().ptr(), nk, width, off, hd, kt.data(), true);
    gather_head(v.value().ptr(), nk, width, off, hd, vt.data(), true);
    Real* ph = probs->data() + h * nq * nk;
    gemm::nn(nq, hd, nk, qh.data(), kt.data(), ph);
    for (std::size_t i = 0; i < nq; ++i) {
      Real* row = ph + i * nk;
      kern.scale(sc, row, row, nk);
      if (mask) kern.add(row, mask->ptr() + i * nk, row, nk);
      const Real m = *std::max_element(row, row + nk);
      Real z = 0;
      for (std::size_t j = 0; j < nk; ++j) z += (row[j] = std::exp(row[j] - m));
      kern.scale(Real(1) / z, row, row, nk);
    }
    std::fill(oh.begin(), oh.end(), Real(0));
    gemm::nt(nq, nk, hd, ph, vt.data(), oh.data());
    scatter_head_add(oh.data(), nq, width, off, hd, out.ptr(), false);
  }
  if (mean_weights) {
    Tensor<Real> acc({nq, nk});
    for (std::size_t h = 0; h < heads; ++h) kern.add(acc.ptr(), probs->data() + h * nq * nk, acc.ptr(), nq * nk);
    kern.scale(Real(1) / static_cast<Real>(heads), acc.ptr(), acc.ptr(), nq * nk);
    *mean_weights = std::move(acc);
  }

  return make_result<Real>(std::move(out), "multi_head_attention", {&q, &k, &v},
                           [q, k, v, heads, nq, nk, width, hd, sc, probs](Node<Real>& self) {
    const bool gq = q.requires_grad(), gk = k.requires_grad(), gv = v.requires_grad();
    Real* dq = gq ? q.node().grad_buffer().ptr() : nullptr;
    Real* dk = gk ? k.node().grad_buffer().ptr() : nullptr;
    Real* dv = gv ? v.node().grad_buffer().ptr() : nullptr;
    std::vector<Real> qh(nq * hd), kh(nk * hd), kt(hd * nk), vt(hd * nk), doh(nq * hd);
    std::vector<Real> dp(nq * nk), dqh(nq * hd), dkt(hd * nk), dvt(hd * nk);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * hd;
      const Real* ph = probs->data() + h * nq * nk;
      gather_head(self.grad.ptr(), nq, width, off, hd, doh.data(), false);
      gather_head(v.value().ptr(), nk, width, off, hd, vt.data(), true);
      if (gv) {
        std::fill(dvt.begin(), dvt.end(), Real(0));
        gemm::tn(hd, nq, nk, doh.data(), ph, dvt.data());
        scatter_head_add(dvt.data(), nk, width, off, hd, dv, true);
      }
      if (!gq && !gk) continue;
      std::fill(dp.begin(), dp.end(), Real(0));
      gemm::nn(nq, hd, nk, doh.data(), vt.data(), dp.data());
      for (std::size_t i = 0; i < nq; ++i) {
        Real* row = dp.data() + i * nk;
        const Real* pr = ph + i * nk;
        Real rd = 0;
        for (std::size_t j = 0; j < nk; ++j) rd += row[j] * pr[j];
        for (std::size_t j = 0; j < nk; ++j) row[j] = pr[j] * (row[j] - rd) * sc;
      }
      if (gq) {
        gather_head(k.value().ptr(), nk, width, off, hd, kt.data(), true);
        std::fill(dqh.begin(), dqh.end(), Real(0));
        gemm::nt(nq, nk, hd, dp.data(), kt.data(), dqh.data());
        scatter_head_add(dqh.data(), nq, width, off, hd, dq, false);
      }
      if (gk) {
        gather_head(q.value().ptr(), nq, width, off, hd, qh.data(), false);
        std::fill(dkt.begin(), dkt.end(), Real(0));
        gemm::tn(hd, nq, nk, qh.data(), dp.data(), dkt.data());
        scatter_head_add(dkt.data(), nk, width, off, hd, dk, true);
      }
    }
  });
}

template <class Real>
void init_msa_layer(ParamStore<Real>& params, const std::string& prefix, const AttentionDims& dims,
                    std::mt19937_64& rng) {
  dims.validate();
  const std::size_t c = dims.model_dim, d = dims.latent_dim, f = dims.ffn_hidden;
  const double sc = 1.0 / std::sqrt(static_cast<double>(c));
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sf = 1.0 / std::sqrt(static_cast<double>(f));
  add_layer_norm(params, prefix + ".ln1", c);
  params.add(prefix + ".wq", normal_tensor<Real>({c, d}, sc, rng));
  params.add(prefix + ".wk", normal_tensor<Real>({c, d}, sc, rng));
  params.add(prefix + ".wv", normal_tensor<Real>({c, d}, sc, rng));
  params.add(prefix + ".wo", normal_tensor<Real>({d, c}, sd, rng));
  params.add(prefix + ".bo", Tensor<Real>({c}));
  add_layer_norm(params, prefix + ".ln2", c);
  params.add(prefix + ".w1", normal_tensor<Real>({c, f}, sc, rng));
  params.add(prefix + ".b1", Tensor<Real>({f}));
  params.add(prefix + ".w2", normal_tensor<Real>({f, c}, sf, rng));
  params.add(prefix + ".b2", Tensor<Real>({c}));
}

template <class Real>
void init_mca_layer(ParamStore<Real>& params, const std::string& prefix, const AttentionDims& dims,
                    std::mt19937_64& rng) {
  dims.validate();
  const std::size_t c = dims.model_dim, d = dims.latent_dim;
  const double sc = 1.0 / std::sqrt(static_cast<double>(c));
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  add_layer_norm(params, prefix + ".lnq", c);
  add_layer_norm(params, prefix + ".lnkv", c);
  params.add(prefix + ".wq", normal_tensor<Real>({c, d}, sc, rng));
  params.add(prefix + ".wk", normal_tensor<Real>({c, d}, sc, rng));
  params.add(prefix + ".wv", normal_tensor<Real>({c, d}, sc, rng));
  params.add(prefix + ".wo", normal_tensor<Real>({d, c}, sd, rng));
  params.add(prefix + ".bo", Tensor<Real>({c}));
}

template <class Real>
Var<Real> msa_layer(const Bound<Real>& p, const std::string& prefix, const Var<Real>& tokens,
                    const AttentionDims& dims) {
  if (tokens.dims().size() != 2 || tokens.dim(1) != dims.model_dim)
    throw ShapeError("msa_layer: tokens " + shape_str(tokens.dims()) + " do not match model dim " +
                     std::to_string(dims.model_dim));
  if (tokens.dim(0) == 0) throw ContractError("msa_layer: empty token set");
  require_finite(tokens, "msa_layer");
  const Var<Real> h = layer_norm(tokens, p[prefix + ".ln1.g"], p[prefix + ".ln1.b"]);
  const Var<Real> attn = multi_head_attention(linear(h, p[prefix + ".wq"]), linear(h, p[prefix + ".wk"]),
                                              linear(h, p[prefix + ".wv"]), dims.heads);
  const Var<Real> x = add(tokens, linear(attn, p[prefix + ".wo"], p[prefix + ".bo"]));
  const Var<Real> h2 = layer_norm(x, p[prefix + ".ln2.g"], p[prefix + ".ln2.b"]);
  const Var<Real> ffn = linear(gelu(linear(h2, p[prefix + ".w1"], p[prefix + ".b1"])), p[prefix + ".w2"],
                               p[prefix + ".b2"]);
  return add(x, ffn);
}

template <class Real>
Var<Real> mca_layer(const Bound<Real>& p, const std::string& prefix, const Var<Real>& queries,
                    const Var<Real>& context, const AttentionDims& dims, const Tensor<Real>* mask,
                    Tensor<Real>* mean_weights) {
  if (queries.dims().size() != 2 || queries.dim(1) != dims.model_dim || queries.dim(0) == 0)
    throw ShapeError("mca_layer: queries " + shape_str(queries.dims()) + " do not match model dim " +
                     std::to_string(dims.model_dim));
  if (context.dims().size() != 2 || context.dim(1) != dims.model_dim)
    throw ShapeError("mca_layer: context " + shape_str(context.dims()) + " does not match model dim");
  if (context.dim(0) == 0) throw ContractError("mca_layer: empty context");
  require_finite(queries, "mca_layer");
  require_finite(context, "mca_layer");
  const Var<Real> hq = layer_norm(queries, p[prefix + ".lnq.g"], p[prefix + ".lnq.b"]);
  const Var<Real> hc = layer_norm(context, p[prefix + ".lnkv.g"], p[prefix + ".lnkv.b"]);
  const Var<Real> attn = multi_head_attention(linear(hq, p[prefix + ".wq"]), linear(hc, p[prefix + ".wk"]),
                                              linear(hc, p[prefix + ".wv"]), dims.heads, mask, mean_weights);
  return add(queries, linear(attn, p[prefix + ".wo"], p[prefix + ".bo"]));
}

#define ART_INSTANTIATE(R)                                                                                    \
  template Var<R> scaled_dot_attention(const Var<R>&, const Var<R>&, const Var<R>&, const Tensor<R>*,         \
                                       Var<R>*);                                                              \
  template Var<R> multi_head_attention(const Var<R>&, const Var<R>&, const Var<R>&, std::size_t,              \
                                       const Tensor<R>*, Tensor<R>*);                                         \
  template void init_msa_layer(ParamStore<R>&, const std::string&, const AttentionDims&, std::mt19937_64&);   \
  template void init_mca_layer(ParamStore<R>&, const std::string&, const AttentionDims&, std::mt19937_64&);   \
  template Var<R> msa_layer(const Bound<R>&, const std::string&, const Var<R>&, const AttentionDims&);        \
  template Var<R> mca_layer(const Bound<R>&, const std::string&, const Var<R>&, const Var<R>&,                \
                            const AttentionDims&, const Tensor<R>*, Tensor<R>*);

ART_INSTANTIATE(float)
ART_INSTANTIATE(double)
#undef ART_INSTANTIATE

}  // namespace art
