// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pre-norm transformer layers: self-attention (MSA) over a token set and
// cross-attention (MCA) from region queries onto frame tokens.

#include <optional>
#include <random>
#include <string>

#include "art/ops.hpp"
#include "art/params.hpp"

namespace art {

struct AttentionDims {
  std::size_t model_dim = 64;
  std::size_t latent_dim = 256;  // d: width of the Q/K/V projections
  std::size_t heads = 4;
  std::size_t ffn_hidden = 128;

  std::size_t head_dim() const { return latent_dim / heads; }
  void validate() const;
};

// softmax(Q K^T / sqrt(d) + mask) V for a single head; d = Q's width.
// Optionally returns the (q, k) weight matrix.
template <class Real>
Var<Real> scaled_dot_attention(const Var<Real>& q, const Var<Real>& k, const Var<Real>& v,
                               const Tensor<Real>* mask = nullptr, Var<Real>* weights = nullptr);

// Splits the latent width into `heads` slices, attends per head and
// concatenates. `mean_weights`, when given, receives the head-averaged
// (q, k) attention matrix.
template <class Real>
Var<Real> multi_head_attention(const Var<Real>& q, const Var<Real>& k, const Var<Real>& v, std::size_t heads,
                               const Tensor<Real>* mask = nullptr, Tensor<Real>* mean_weights = nullptr);

// Parameter names: <prefix>.ln1.{g,b} wq wk wv wo bo ln2.{g,b} w1 b1 w2 b2
template <class Real>
void init_msa_layer(ParamStore<Real>& params, const std::string& prefix, const AttentionDims& dims,
                    std::mt19937_64& rng);

// Parameter names: <prefix>.lnq.{g,b} lnkv.{g,b} wq wk wv wo bo
template <class Real>
void init_mca_layer(ParamStore<Real>& params, const std::string& prefix, const AttentionDims& dims,
                    std::mt19937_64& rng);

// x + Attn(LN(x)), then + FFN(LN(.)). tokens: (n, C) -> (n, C).
template <class Real>
Var<Real> msa_layer(const Bound<Real>& p, const std::string& prefix, const Var<Real>& tokens,
                    const AttentionDims& dims);

// queries + Attn(LN(queries), LN(context)). (K, C) x (n, C) -> (K, C).
// `mask` is an additive (K, n) score bias (tests use it to saturate rows).
template <class Real>
Var<Real> mca_layer(const Bound<Real>& p, const std::string& prefix, const Var<Real>& queries,
                    const Var<Real>& context, const AttentionDims& dims, const Tensor<Real>* mask = nullptr,
                    Tensor<Real>* mean_weights = nullptr);

}  // namespace art
