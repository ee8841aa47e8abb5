// SPDX-License-Identifier: Apache-2.0
#pragma once

// The ART head: top-K semantic selection, per-frame spatial semantic
// enhancement (SSE), region-specific semantics activation (RSSA), tracklet
// formation, saliency-weighted aggregation and the two prediction heads.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "art/attention.hpp"
#include "art/semantic_bank.hpp"

namespace art {

enum class AggregationMode {
  literal,     // (1/T) sum_t w_t r_t, the printed form
  normalized,  // sum_t w_t r_t / sum_t w_t
  sum,         // sum_t r_t, the unweighted "+RSSA" ablation
};

struct ModelConfig {
  std::size_t T = 16, H = 8, W = 8, C = 64;
  std::size_t K = 2;
  std::size_t d = 256;
  std::size_t heads = 4;
  std::size_t depth = 4;
  std::size_t ffn_mult = 2;
  std::size_t n_class = 4;
  std::size_t n_prom = 2;
  std::size_t c_text = 32;
  bool pos_emb = true;
  bool use_sse = true;
  bool use_rssa = true;  // false gives the class-token-only baseline
  AggregationMode aggregation = AggregationMode::literal;
  double dropout = 0.0;

  void validate() const;
  std::size_t tokens_per_frame() const { return H * W; }
  // Width D of the final prediction input Concat(x_cls, Tr_1..Tr_K).
  std::size_t concat_width() const { return C * (1 + (use_rssa ? K : 0)); }
  AttentionDims attention_dims() const { return {C, d, heads, ffn_mult * C}; }
};

template <class Real>
struct FeatureVolume {
  Tensor<Real> x;  // (T, H, W, C)
};

template <class Real>
struct ResponseSet {
  Var<Real> r;          // (K, C)
  Tensor<Real> attn;    // (K, H*W), head-averaged final-layer weights
};

template <class Real>
struct ArtOutputs {
  Var<Real> x_cls;                       // (C)
  std::vector<std::size_t> topk;         // selected classes, descending
  Var<Real> s_topk;                      // (K, C)
  std::vector<Var<Real>> responses;      // T x (K, C)
  std::vector<Tensor<Real>> attn;        // T x (K, H*W)
  std::vector<Var<Real>> tracklets;      // K x (T, C)
  std::vector<Var<Real>> aggregated;     // K x (C)
  Var<Real> logits_v;                    // (N_class)
  Var<Real> logits_con;                  // (N_class)
};

// Registers every head parameter plus the bank parameters.
template <class Real>
ParamStore<Real> init_model_params(const ModelConfig& cfg, const Tensor<Real>& bank_s0, std::uint64_t seed);

// LayerNorm of the (T, H, W) mean of X, then a learned C -> C map.
template <class Real>
Var<Real> class_token(const Bound<Real>& p, const Var<Real>& x);

// K classes with the largest cosine(x_cls, bank_proj[j]), descending; ties
// go to the lower class index.
template <class Real>
std::vector<std::size_t> select_topk_semantics(const Tensor<Real>& x_cls, const Tensor<Real>& bank_proj,
                                               std::size_t k);

// One frame: MSA stack over Concat(X_t, S_topk), split back into
// (X_hat_t, S_hat_t).
template <class Real>
std::pair<Var<Real>, Var<Real>> sse_forward(const Bound<Real>& p, const ModelConfig& cfg, const Var<Real>& frame,
                                            const Var<Real>& s_topk);

// One frame: Q_t = P + S_hat_t, then the MCA stack over X_hat_t. `mask` is
// an optional additive (K, H*W) score bias applied in every layer.
template <class Real>
ResponseSet<Real> rssa_forward(const Bound<Real>& p, const ModelConfig& cfg, const Var<Real>& frame_hat,
                               const Var<Real>& prompts, const Var<Real>& s_hat,
                               const Tensor<Real>* mask = nullptr);

// Re-indexes T response sets (K, C) into K tracklets (T, C).
template <class Real>
std::vector<Var<Real>> form_tracklets(const std::vector<Var<Real>>& responses);

// Inverse of form_tracklets on plain values.
template <class Real>
std::vector<Tensor<Real>> unform_tracklets(const std::vector<Tensor<Real>>& tracklets);

// Temporal-saliency aggregation of one tracklet (T, C) against S_topk (K, C).
template <class Real>
Var<Real> aggregate_tracklet(const Var<Real>& tracklet, const Var<Real>& s_topk, AggregationMode mode);

// Saliency weights S_t^temp (T) for a tracklet; exposed for inspection.
template <class Real>
Var<Real> temporal_saliency(const Var<Real>& tracklet, const Var<Real>& s_topk);

// (logits_v, logits_con) from x_cls and the K aggregated tracklets.
template <class Real>
std::pair<Var<Real>, Var<Real>> predict(const Bound<Real>& p, const ModelConfig& cfg, const Var<Real>& x_cls,
                                        const std::vector<Var<Real>>& aggregated,
                                        std::mt19937_64* dropout_rng = nullptr);

struct ForwardOptions {
  std::mt19937_64* dropout_rng = nullptr;  // required when dropout > 0 in training
};

template <class Real>
ArtOutputs<Real> art_forward(const Bound<Real>& p, const ModelConfig& cfg, const Tensor<Real>& served_bank,
                             const FeatureVolume<Real>& video, const ForwardOptions& opts = {});

std::size_t argmax_lowest(std::span<const double> values);

}  // namespace art
