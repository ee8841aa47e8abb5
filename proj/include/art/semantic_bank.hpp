// SPDX-License-Identifier: Apache-2.0
#pragma once

// Text-constrained semantic bank of shape (N_prom, N_class, C_t).
//
// S0 is the bank as loaded and never changes. The served bank S feeds top-K
// selection and only moves through ema_update. The agent copy Sa is a
// trainable parameter ("bank.sa") that receives the consistency-loss
// gradients; "bank.proj" maps C_t into the visual width C.

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "art/params.hpp"

namespace art {

enum class PrototypeReduction { mean, sum };

template <class Real>
struct SemanticBank {
  Tensor<Real> s0;
  Tensor<Real> s;
  double mu = 0.99;

  static SemanticBank from_initial(Tensor<Real> s0, double mu);
  std::size_t n_prom() const { return s0.dim(0); }
  std::size_t n_class() const { return s0.dim(1); }
  std::size_t c_text() const { return s0.dim(2); }
};

struct BankSpec {
  std::size_t n_prom = 2;
  std::size_t n_class = 4;
  std::size_t c_text = 32;
  double jitter = 0.3;  // per-prompt spread around the class mean (synthetic mode)
};

// Class-clustered Gaussian embeddings, each vector scaled to unit norm.
template <class Real>
Tensor<Real> generate_synthetic_bank(const BankSpec& spec, std::uint64_t seed);

// Loads a pre-extracted bank; FormatError unless dims are (N_prom, N_class, C_t).
template <class Real>
Tensor<Real> load_bank(const std::filesystem::path& path, const BankSpec& spec);

// Registers "bank.sa" (copy of S0), "bank.proj" (C_t, C) and the prototype
// MLP ("mlp.w1" (D, C_t), "mlp.b1", "mlp.w2" (C_t, C_t), "mlp.b2").
template <class Real>
void init_bank_params(ParamStore<Real>& params, const Tensor<Real>& s0, std::size_t visual_dim,
                      std::size_t concat_width, std::mt19937_64& rng);

// Per class, keep the prompt closest (cosine) to the class's prompt mean,
// then project to the visual width: (N_class, C). Ties keep the lower prompt.
template <class Real>
Var<Real> class_semantics_for_selection(const Tensor<Real>& bank, const Var<Real>& proj);

// Winner-take-all class scores: per class j, max over prompts i of
// cosine(x_cls, Sa[i,j] proj). Returns (N_class).
template <class Real>
Var<Real> winner_take_all_scores(const Var<Real>& x_cls, const Var<Real>& sa, const Var<Real>& proj);

// Cross-entropy of the winner-take-all scores against label y.
template <class Real>
Var<Real> video_consistency_loss(const Var<Real>& x_cls, const Var<Real>& sa, const Var<Real>& proj,
                                 std::size_t y);

// GELU MLP from the prototype width D to C_t: (N_class, D) -> (N_class, C_t).
template <class Real>
Var<Real> prototype_mlp(const Bound<Real>& p, const Var<Real>& prototypes);

// Mean over prompts of the cosine matrix between mapped prototypes and
// Sa[i]; returns the (N_class, N_class) similarity matrix.
template <class Real>
Var<Real> prototype_similarity(const Var<Real>& mapped, const Var<Real>& sa);

// Row i of the similarity matrix is scored against class i.
template <class Real>
Var<Real> prototype_consistency_loss(const Var<Real>& similarity,
                                     PrototypeReduction reduction = PrototypeReduction::mean);

template <class Real>
Var<Real> sema_loss(const Var<Real>& video_term, const Var<Real>& prototype_term);

// Sa' = Sa - eta * grad;  S' = mu * S + (1 - mu) * Sa'.
template <class Real>
void ema_update(Tensor<Real>& s, Tensor<Real>& sa, const Tensor<Real>& grad, double eta, double mu);

}  // namespace art
