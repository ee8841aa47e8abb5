// SPDX-License-Identifier: Apache-2.0
#include "art/semantic_bank.hpp"

#include <cmath>

#include "art/ops.hpp"
#include "art/rng.hpp"
#include "art/tensor_io.hpp"

namespace art {

template <class Real>
SemanticBank<Real> SemanticBank<Real>::from_initial(Tensor<Real> initial, double mu) {
  if (initial.rank() != 3) throw ShapeError("semantic bank must be rank 3, got " + shape_str(initial.dims()));
  if (mu < 0.0 || mu > 1.0) throw ConfigError("bank momentum mu must lie in [0, 1]");
  SemanticBank b;
  b.s = initial;
  b.s0 = std::move(initial);
  b.mu = mu;
  return b;
}

template <class Real>
Tensor<Real> generate_synthetic_bank(const BankSpec& spec, std::uint64_t seed) {
  if (spec.n_prom == 0 || spec.n_class == 0 || spec.c_text == 0)
    throw ConfigError("bank needs N_prom, N_class, C_t >= 1");
  auto rng = substream(seed, "bank");
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> centers(spec.n_class * spec.c_text);
  for (auto& v : centers) v = nd(rng);
  Tensor<Real> bank({spec.n_prom, spec.n_class, spec.c_text});
  std::vector<double> v(spec.c_text);
  for (std::size_t i = 0; i < spec.n_prom; ++i)
    for (std::size_t j = 0; j < spec.n_class; ++j) {
      double norm = 0;
      for (std::size_t c = 0; c < spec.c_text; ++c) {
        v[c] = centers[j * spec.c_text + c] + spec.jitter * nd(rng);
        norm += v[c] * v[c];
      }
      norm = std::sqrt(norm);
      for (std::size_t c = 0; c < spec.c_text; ++c)
        bank[(i * spec.n_class + j) * spec.c_text + c] = static_cast<Real>(v[c] / norm);
    }
  return bank;
}

template <class Real>
Tensor<Real> load_bank(const std::filesystem::path& path, const BankSpec& spec) {
  Tensor<Real> t = io::read_tensor<Real>(path);
  const Shape want{spec.n_prom, spec.n_class, spec.c_text};
  if (t.dims() != want)
    throw FormatError("bank file " + path.string() + " has dims " + shape_str(t.dims()) + ", expected " +
                      shape_str(want));
  return t;
}

template <class Real>
void init_bank_params(ParamStore<Real>& params, const Tensor<Real>& s0, std::size_t visual_dim,
                      std::size_t concat_width, std::mt19937_64& rng) {
  const std::size_t ct = s0.dim(2);
  params.add("bank.sa", s0);
  params.add("bank.proj", normal_tensor<Real>({ct, visual_dim}, 1.0 / std::sqrt(double(ct)), rng));
  params.add("mlp.w1", normal_tensor<Real>({concat_width, ct}, 1.0 / std::sqrt(double(concat_width)), rng));
  params.add("mlp.b1", Tensor<Real>({ct}));
  params.add("mlp.w2", normal_tensor<Real>({ct, ct}, 1.0 / std::sqrt(double(ct)), rng));
  params.add("mlp.b2", Tensor<Real>({ct}));
}

template <class Real>
Var<Real> class_semantics_for_selection(const Tensor<Real>& bank, const Var<Real>& proj) {
  if (bank.rank() != 3) throw ShapeError("class_semantics_for_selection: bank must be rank 3");
  const std::size_t np = bank.dim(0), nc = bank.dim(1), ct = bank.dim(2);
  Tensor<Real> pooled({nc, ct});
  std::vector<double> m(ct);
  for (std::size_t j = 0; j < nc; ++j) {
    std::fill(m.begin(), m.end(), 0.0);
    for (std::size_t i = 0; i < np; ++i)
      for (std::size_t c = 0; c < ct; ++c) m[c] += bank[(i * nc + j) * ct + c];
    double mnorm = 0;
    for (double x : m) mnorm += x * x;
    mnorm = std::sqrt(mnorm);
    std::size_t best = 0;
    double best_cos = -2.0;
    for (std::size_t i = 0; i < np; ++i) {
      const Real* row = bank.ptr() + (i * nc + j) * ct;
      double dot = 0, n2 = 0;
      for (std::size_t c = 0; c < ct; ++c) {
        dot += row[c] * m[c];
        n2 += double(row[c]) * row[c];
      }
      // A zero prompt mean leaves every prompt tied; keep the first.
      const double cosv = (mnorm > 0 && n2 > 0) ? dot / (mnorm * std::sqrt(n2)) : 0.0;
      if (cosv > best_cos) {
        best_cos = cosv;
        best = i;
      }
    }
    std::copy_n(bank.ptr() + (best * nc + j) * ct, ct, pooled.ptr() + j * ct);
  }
  return matmul(Var<Real>::constant(std::move(pooled)), proj);
}

template <class Real>
Var<Real> winner_take_all_scores(const Var<Real>& x_cls, const Var<Real>& sa, const Var<Real>& proj) {
  if (sa.dims().size() != 3) throw ShapeError("winner_take_all_scores: Sa must be rank 3");
  const std::size_t np = sa.dim(0), nc = sa.dim(1), ct = sa.dim(2);
  const Var<Real> projected = matmul(reshape(sa, {np * nc, ct}), proj);
  const Var<Real> sims = cosine_matrix(reshape(x_cls, {1, x_cls.size()}), projected);
  return max(reshape(sims, {np, nc}), 0);
}

template <class Real>
Var<Real> video_consistency_loss(const Var<Real>& x_cls, const Var<Real>& sa, const Var<Real>& proj,
                                 std::size_t y) {
  if (y >= sa.dim(1))
    throw ContractError("video_consistency_loss: label " + std::to_string(y) + " out of range");
  return cross_entropy(winner_take_all_scores(x_cls, sa, proj), y);
}

template <class Real>
Var<Real> prototype_mlp(const Bound<Real>& p, const Var<Real>& prototypes) {
  const Var<Real> h = gelu(add_row(matmul(prototypes, p["mlp.w1"]), p["mlp.b1"]));
  return add_row(matmul(h, p["mlp.w2"]), p["mlp.b2"]);
}

template <class Real>
Var<Real> prototype_similarity(const Var<Real>& mapped, const Var<Real>& sa) {
  if (sa.dims().size() != 3) throw ShapeError("prototype_similarity: Sa must be rank 3");
  const std::size_t np = sa.dim(0), nc = sa.dim(1), ct = sa.dim(2);
  if (mapped.dims() != Shape{nc, ct})
    throw ShapeError("prototype_similarity: mapped prototypes " + shape_str(mapped.dims()) + " vs bank " +
                     shape_str(sa.dims()));
  Var<Real> acc;
  for (std::size_t i = 0; i < np; ++i) {
    const Var<Real> prompt = reshape(slice(sa, 0, i, i + 1), {nc, ct});
    const Var<Real> sim = cosine_matrix(mapped, prompt);
    acc = acc.valid() ? add(acc, sim) : sim;
  }
  return scale(acc, Real(1) / static_cast<Real>(np));
}

template <class Real>
Var<Real> prototype_consistency_loss(const Var<Real>& similarity, PrototypeReduction reduction) {
  if (similarity.dims().size() != 2 || similarity.dim(0) != similarity.dim(1))
    throw ShapeError("prototype_consistency_loss: similarity must be square, got " +
                     shape_str(similarity.dims()));
  const std::size_t nc = similarity.dim(0);
  Var<Real> total;
  for (std::size_t i = 0; i < nc; ++i) {
    const Var<Real> row = reshape(slice(similarity, 0, i, i + 1), {nc});
    const Var<Real> ce = cross_entropy(row, i);
    total = total.valid() ? add(total, ce) : ce;
  }
  return reduction == PrototypeReduction::mean ? scale(total, Real(1) / static_cast<Real>(nc)) : total;
}

template <class Real>
Var<Real> sema_loss(const Var<Real>& video_term, const Var<Real>& prototype_term) {
  return add(video_term, prototype_term);
}

template <class Real>
void ema_update(Tensor<Real>& s, Tensor<Real>& sa, const Tensor<Real>& grad, double eta, double mu) {
  if (s.dims() != sa.dims() || sa.dims() != grad.dims())
    throw ContractError("ema_update: shape mismatch " + shape_str(s.dims()) + " / " + shape_str(sa.dims()) +
                        " / " + shape_str(grad.dims()));
  if (mu < 0.0 || mu > 1.0) throw ContractError("ema_update: mu must lie in [0, 1]");
  if (eta < 0.0) throw ContractError("ema_update: eta must be non-negative");
  const Real e = static_cast<Real>(eta);
  const Real m = static_cast<Real>(mu);
  const Real one_minus = static_cast<Real>(1.0 - mu);
  for (std::size_t i = 0; i < sa.size(); ++i) {
    sa[i] = sa[i] - e * grad[i];
    s[i] = m * s[i] + one_minus * sa[i];
  }
}

#define ART_INSTANTIATE(R)                                                                                 \
  template struct SemanticBank<R>;                                                                         \
  template Tensor<R> generate_synthetic_bank<R>(const BankSpec&, std::uint64_t);                           \
  template Tensor<R> load_bank<R>(const std::filesystem::path&, const BankSpec&);                          \
  template void init_bank_params(ParamStore<R>&, const Tensor<R>&, std::size_t, std::size_t,               \
                                 std::mt19937_64&);                                                        \
  template Var<R> class_semantics_for_selection(const Tensor<R>&, const Var<R>&);                          \
  template Var<R> winner_take_all_scores(const Var<R>&, const Var<R>&, const Var<R>&);                     \
  template Var<R> video_consistency_loss(const Var<R>&, const Var<R>&, const Var<R>&, std::size_t);        \
  template Var<R> prototype_mlp(const Bound<R>&, const Var<R>&);                                           \
  template Var<R> prototype_similarity(const Var<R>&, const Var<R>&);                                      \
  template Var<R> prototype_consistency_loss(const Var<R>&, PrototypeReduction);                           \
  template Var<R> sema_loss(const Var<R>&, const Var<R>&);                                                 \
  template void ema_update(Tensor<R>&, Tensor<R>&, const Tensor<R>&, double, double);

ART_INSTANTIATE(float)
ART_INSTANTIATE(double)
#undef ART_INSTANTIATE

}  // namespace art
