// SPDX-License-Identifier: Apache-2.0
#include "art/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "art/rng.hpp"

namespace art {

void ModelConfig::validate() const {
  if (T == 0 || H == 0 || W == 0 || C == 0) throw ConfigError("model dims T, H, W, C must be >= 1");
  if (K == 0) throw ConfigError("K must be >= 1");
  if (n_class == 0 || n_prom == 0 || c_text == 0) throw ConfigError("bank dims must be >= 1");
  if (use_rssa && K > n_class)
    throw ConfigError("K = " + std::to_string(K) + " exceeds the number of classes " + std::to_string(n_class));
  if (depth == 0) throw ConfigError("depth must be >= 1");
  if (ffn_mult == 0) throw ConfigError("ffn_mult must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  attention_dims().validate();
}

namespace {

std::string tagged(const char* stage, const std::exception& e) { return std::string(stage) + ": " + e.what(); }

// Runs one pipeline stage, prefixing any library error with the stage name
// while keeping its type.
template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ShapeError& e) {
    throw ShapeError(tagged(stage, e));
  } catch (const DegenerateInputError& e) {
    throw DegenerateInputError(tagged(stage, e));
  } catch (const ConfigError& e) {
    throw ConfigError(tagged(stage, e));
  } catch (const ContractError& e) {
    throw ContractError(tagged(stage, e));
  }
}

std::string layer_name(const char* stack, std::size_t l) { return std::string(stack) + "." + std::to_string(l); }

}  // namespace

std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

template <class Real>
ParamStore<Real> init_model_params(const ModelConfig& cfg, const Tensor<Real>& bank_s0, std::uint64_t seed) {
  cfg.validate();
  if (bank_s0.dims() != Shape{cfg.n_prom, cfg.n_class, cfg.c_text})
    throw ConfigError("bank dims " + shape_str(bank_s0.dims()) + " do not match the model config");
  auto rng = substream(seed, "init");
  const std::size_t c = cfg.C;
  const double sc = 1.0 / std::sqrt(static_cast<double>(c));
  ParamStore<Real> p;
  p.add("xcls.ln.g", Tensor<Real>({c}, Real(1)));
  p.add("xcls.ln.b", Tensor<Real>({c}));
  p.add("xcls.w", normal_tensor<Real>({c, c}, sc, rng));
  p.add("xcls.b", Tensor<Real>({c}));
  p.add("head_v.w", normal_tensor<Real>({c, cfg.n_class}, sc, rng));
  p.add("head_v.b", Tensor<Real>({cfg.n_class}));
  const std::size_t width = cfg.concat_width();
  p.add("proto.w", normal_tensor<Real>({cfg.n_class, width}, 1.0 / std::sqrt(double(width)), rng));
  if (cfg.use_rssa) {
    const AttentionDims dims = cfg.attention_dims();
    p.add("pos", normal_tensor<Real>({cfg.tokens_per_frame(), c}, 0.5, rng));
    p.add("prompts", normal_tensor<Real>({cfg.K, c}, 1.0, rng));
    if (cfg.use_sse)
      for (std::size_t l = 0; l < cfg.depth; ++l) init_msa_layer(p, layer_name("sse", l), dims, rng);
    for (std::size_t l = 0; l < cfg.depth; ++l) init_mca_layer(p, layer_name("rssa", l), dims, rng);
  }
  init_bank_params(p, bank_s0, c, width, rng);
  return p;
}

template <class Real>
Var<Real> class_token(const Bound<Real>& p, const Var<Real>& x) {
  if (x.dims().size() != 4) throw ShapeError("class_token: expected (T, H, W, C), got " + shape_str(x.dims()));
  const std::size_t c = x.dim(3);
  const Var<Real> pooled = mean(reshape(x, {x.size() / c, c}), 0);
  const Var<Real> normed = layer_norm(pooled, p["xcls.ln.g"], p["xcls.ln.b"]);
  return add_row(reshape(matmul(reshape(normed, {1, c}), p["xcls.w"]), {c}), p["xcls.b"]);
}

template <class Real>
std::vector<std::size_t> select_topk_semantics(const Tensor<Real>& x_cls, const Tensor<Real>& bank_proj,
                                               std::size_t k) {
  if (bank_proj.rank() != 2 || x_cls.rank() != 1 || bank_proj.dim(1) != x_cls.dim(0))
    throw ShapeError("select_topk_semantics: x_cls " + shape_str(x_cls.dims()) + " vs bank " +
                     shape_str(bank_proj.dims()));
  const std::size_t n = bank_proj.dim(0), c = x_cls.dim(0);
  if (k > n)
    throw ConfigError("select_topk_semantics: K = " + std::to_string(k) + " exceeds " + std::to_string(n) +
                      " classes");
  double xn = 0;
  for (std::size_t j = 0; j < c; ++j) xn += double(x_cls[j]) * x_cls[j];
  xn = std::sqrt(xn);
  if (!(xn > 0)) throw DegenerateInputError("select_topk_semantics: zero-norm class token");
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0, bn = 0;
    for (std::size_t j = 0; j < c; ++j) {
      dot += double(x_cls[j]) * bank_proj(i, j);
      bn += double(bank_proj(i, j)) * bank_proj(i, j);
    }
    if (!(bn > 0)) throw DegenerateInputError("select_topk_semantics: zero-norm bank entry " + std::to_string(i));
    score[i] = dot / (xn * std::sqrt(bn));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  order.resize(k);
  return order;
}

template <class Real>
std::pair<Var<Real>, Var<Real>> sse_forward(const Bound<Real>& p, const ModelConfig& cfg, const Var<Real>& frame,
                                            const Var<Real>& s_topk) {
  if (frame.dims() != Shape{cfg.tokens_per_frame(), cfg.C})
    throw ShapeError("sse_forward: frame " + shape_str(frame.dims()) + " does not match config");
  if (s_topk.dims().size() != 2 || s_topk.dim(1) != cfg.C)
    throw ShapeError("sse_forward: semantics " + shape_str(s_topk.dims()) + " do not match config");
  const std::size_t n = frame.dim(0), k = s_topk.dim(0);
  const AttentionDims dims = cfg.attention_dims();
  Var<Real> tokens = concat(std::vector<Var<Real>>{frame, s_topk}, 0);
  for (std::size_t l = 0; l < cfg.depth; ++l) tokens = msa_layer(p, layer_name("sse", l), tokens, dims);
  return {slice(tokens, 0, 0, n), slice(tokens, 0, n, n + k)};
}

template <class Real>
ResponseSet<Real> rssa_forward(const Bound<Real>& p, const ModelConfig& cfg, const Var<Real>& frame_hat,
                               const Var<Real>& prompts, const Var<Real>& s_hat, const Tensor<Real>* mask) {
  if (prompts.dims() != s_hat.dims())
    throw ShapeError("rssa_forward: prompts " + shape_str(prompts.dims()) + " vs semantics " +
                     shape_str(s_hat.dims()));
  const AttentionDims dims = cfg.attention_dims();
  ResponseSet<Real> out;
  Var<Real> q = add(prompts, s_hat);
  for (std::size_t l = 0; l < cfg.depth; ++l)
    q = mca_layer(p, layer_name("rssa", l), q, frame_hat, dims, mask, l + 1 == cfg.depth ? &out.attn : nullptr);
  out.r = q;
  return out;
}

template <class Real>
std::vector<Var<Real>> form_tracklets(const std::vector<Var<Real>>& responses) {
  if (responses.empty()) throw ContractError("form_tracklets: no frames");
  const Shape& first = responses.front().dims();
  if (first.size() != 2) throw ShapeError("form_tracklets: responses must be (K, C)");
  for (const auto& r : responses)
    if (r.dims() != first) throw ContractError("form_tracklets: inconsistent K or C across frames");
  const std::size_t k = first[0];
  std::vector<Var<Real>> tracklets;
  tracklets.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<Var<Real>> rows;
    rows.reserve(responses.size());
    for (const auto& r : responses) rows.push_back(slice(r, 0, i, i + 1));
    tracklets.push_back(concat(rows, 0));
  }
  return tracklets;
}

template <class Real>
std::vector<Tensor<Real>> unform_tracklets(const std::vector<Tensor<Real>>& tracklets) {
  if (tracklets.empty()) throw ContractError("unform_tracklets: no tracklets");
  const std::size_t k = tracklets.size(), t = tracklets.front().dim(0), c = tracklets.front().dim(1);
  std::vector<Tensor<Real>> responses(t, Tensor<Real>({k, c}));
  for (std::size_t i = 0; i < k; ++i) {
    if (tracklets[i].dims() != Shape{t, c}) throw ContractError("unform_tracklets: inconsistent tracklet shapes");
    for (std::size_t f = 0; f < t; ++f)
      std::copy_n(tracklets[i].ptr() + f * c, c, responses[f].ptr() + i * c);
  }
  return responses;
}

template <class Real>
Var<Real> temporal_saliency(const Var<Real>& tracklet, const Var<Real>& s_topk) {
  if (tracklet.dims().size() != 2 || tracklet.dim(0) == 0)
    throw ContractError("temporal_saliency: tracklet must be (T, C) with T >= 1");
  if (s_topk.dims().size() != 2 || s_topk.dim(1) != tracklet.dim(1))
    throw ShapeError("temporal_saliency: semantics " + shape_str(s_topk.dims()) + " vs tracklet " +
                     shape_str(tracklet.dims()));
  const Var<Real> scores = matmul(s_topk, transpose(tracklet));  // (K, T)
  return mean(softmax(scores, 1), 0);
}

template <class Real>
Var<Real> aggregate_tracklet(const Var<Real>& tracklet, const Var<Real>& s_topk, AggregationMode mode) {
  if (tracklet.dims().size() != 2 || tracklet.dim(0) == 0)
    throw ContractError("aggregate_tracklet: tracklet must be (T, C) with T >= 1");
  const std::size_t t = tracklet.dim(0), c = tracklet.dim(1);
  if (mode == AggregationMode::sum) return scale(mean(tracklet, 0), static_cast<Real>(t));
  const Var<Real> w = temporal_saliency(tracklet, s_topk);
  const Var<Real> weighted = reshape(matmul(reshape(w, {1, t}), tracklet), {c});
  if (mode == AggregationMode::literal) return scale(weighted, Real(1) / static_cast<Real>(t));
  // The weights sum to one identically, so the divisor carries no gradient.
  Real total = 0;
  for (Real v : w.value().data()) total += v;
  return scale(weighted, Real(1) / total);
}

template <class Real>
std::pair<Var<Real>, Var<Real>> predict(const Bound<Real>& p, const ModelConfig& cfg, const Var<Real>& x_cls,
                                        const std::vector<Var<Real>>& aggregated, std::mt19937_64* dropout_rng) {
  const std::size_t c = cfg.C;
  if (x_cls.dims() != Shape{c}) throw ShapeError("predict: x_cls " + shape_str(x_cls.dims()));
  const Var<Real> logits_v =
      add_row(reshape(matmul(reshape(x_cls, {1, c}), p["head_v.w"]), {cfg.n_class}), p["head_v.b"]);
  std::vector<Var<Real>> parts{reshape(x_cls, {1, c})};
  for (const auto& a : aggregated) {
    if (a.dims() != Shape{c}) throw ShapeError("predict: aggregated tracklet " + shape_str(a.dims()));
    parts.push_back(reshape(a, {1, c}));
  }
  Var<Real> feat = concat(parts, 1);
  if (feat.dim(1) != cfg.concat_width())
    throw ShapeError("predict: concat width " + std::to_string(feat.dim(1)) + ", expected " +
                     std::to_string(cfg.concat_width()));
  if (cfg.dropout > 0.0 && dropout_rng) feat = dropout(feat, cfg.dropout, *dropout_rng);
  const Var<Real> logits_con = reshape(matmul(feat, transpose(p["proto.w"])), {cfg.n_class});
  return {logits_v, logits_con};
}

template <class Real>
ArtOutputs<Real> art_forward(const Bound<Real>& p, const ModelConfig& cfg, const Tensor<Real>& served_bank,
                             const FeatureVolume<Real>& video, const ForwardOptions& opts) {
  const Shape want{cfg.T, cfg.H, cfg.W, cfg.C};
  if (video.x.dims() != want)
    throw ShapeError("art_forward: video dims " + shape_str(video.x.dims()) + " do not match config " +
                     shape_str(want));
  if (!video.x.all_finite()) throw DegenerateInputError("art_forward: non-finite features");
  ArtOutputs<Real> out;
  const Var<Real> x = Var<Real>::constant(video.x);
  out.x_cls = staged("class_token", [&] { return class_token(p, x); });

  if (cfg.use_rssa) {
    const Var<Real> bank_proj = staged("select_topk", [&] {
      return class_semantics_for_selection(served_bank, p["bank.proj"]);
    });
    out.topk = staged("select_topk", [&] { return select_topk_semantics(out.x_cls.value(), bank_proj.value(), cfg.K); });
    out.s_topk = gather_rows(bank_proj, out.topk);

    const std::size_t hw = cfg.tokens_per_frame();
    const Var<Real> frames = reshape(x, {cfg.T * hw, cfg.C});
    for (std::size_t t = 0; t < cfg.T; ++t) {
      Var<Real> frame = slice(frames, 0, t * hw, (t + 1) * hw);
      if (cfg.pos_emb) frame = add(frame, p["pos"]);
      auto [frame_hat, s_hat] = cfg.use_sse ? staged("sse", [&] { return sse_forward(p, cfg, frame, out.s_topk); })
                                            : std::make_pair(frame, out.s_topk);
      ResponseSet<Real> rs = staged("rssa", [&] { return rssa_forward(p, cfg, frame_hat, p["prompts"], s_hat); });
      out.responses.push_back(rs.r);
      out.attn.push_back(std::move(rs.attn));
    }
    out.tracklets = staged("tracklets", [&] { return form_tracklets(out.responses); });
    for (const auto& tr : out.tracklets)
      out.aggregated.push_back(staged("aggregate", [&] { return aggregate_tracklet(tr, out.s_topk, cfg.aggregation); }));
  }
  std::tie(out.logits_v, out.logits_con) =
      staged("predict", [&] { return predict(p, cfg, out.x_cls, out.aggregated, opts.dropout_rng); });
  return out;
}

#define ART_INSTANTIATE(R)                                                                                      \
  template ParamStore<R> init_model_params(const ModelConfig&, const Tensor<R>&, std::uint64_t);                \
  template Var<R> class_token(const Bound<R>&, const Var<R>&);                                                  \
  template std::vector<std::size_t> select_topk_semantics(const Tensor<R>&, const Tensor<R>&, std::size_t);     \
  template std::pair<Var<R>, Var<R>> sse_forward(const Bound<R>&, const ModelConfig&, const Var<R>&,            \
                                                 const Var<R>&);                                                \
  template ResponseSet<R> rssa_forward(const Bound<R>&, const ModelConfig&, const Var<R>&, const Var<R>&,       \
                                       const Var<R>&, const Tensor<R>*);                                        \
  template std::vector<Var<R>> form_tracklets(const std::vector<Var<R>>&);                                      \
  template std::vector<Tensor<R>> unform_tracklets(const std::vector<Tensor<R>>&);                              \
  template Var<R> temporal_saliency(const Var<R>&, const Var<R>&);                                              \
  template Var<R> aggregate_tracklet(const Var<R>&, const Var<R>&, AggregationMode);                            \
  template std::pair<Var<R>, Var<R>> predict(const Bound<R>&, const ModelConfig&, const Var<R>&,                \
                                             const std::vector<Var<R>>&, std::mt19937_64*);                     \
  template ArtOutputs<R> art_forward(const Bound<R>&, const ModelConfig&, const Tensor<R>&,                     \
                                     const FeatureVolume<R>&, const ForwardOptions&);

ART_INSTANTIATE(float)
ART_INSTANTIATE(double)
#undef ART_INSTANTIATE

}  // namespace art
