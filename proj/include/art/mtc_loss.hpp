// SPDX-License-Identifier: Apache-2.0
#pragma once

// Multi-level tracklet contrastive loss over per-frame region responses
// R_t (K, C) and tracklets Tr_k (T, C):
//   spatial  - mean same-frame cosine over ordered pairs i != j (repel)
//   temporal - adjacent-frame cosine per query, compared against lambda
//   tracklet - mean cosine between flattened tracklets, i != j (repel)

#include <vector>

#include "art/ops.hpp"

namespace art {

enum class TemporalMode {
  hinge,    // max(0, lambda - m): pulls adjacent similarity up to lambda
  literal,  // m - lambda, exactly as printed; minimizing it pushes m down
};

struct MtcConfig {
  double lambda = 0.6;
  TemporalMode temporal_mode = TemporalMode::hinge;

  void validate() const;
};

template <class Real>
struct MtcTerms {
  Var<Real> spatial;
  Var<Real> temporal;
  Var<Real> tracklet;
  Var<Real> total;
};

// Returns 0 (with a one-time warning) when K == 1.
template <class Real>
Var<Real> spatial_loss(const std::vector<Var<Real>>& responses);

// Mean adjacent-frame cosine m over queries and t in [0, T-2].
template <class Real>
Var<Real> adjacent_similarity(const std::vector<Var<Real>>& responses);

// Returns 0 (with a one-time warning) when T == 1.
template <class Real>
Var<Real> temporal_loss(const std::vector<Var<Real>>& responses, const MtcConfig& cfg);

// Returns 0 (with a one-time warning) when K == 1.
template <class Real>
Var<Real> tracklet_loss(const std::vector<Var<Real>>& tracklets);

template <class Real>
MtcTerms<Real> mtc_total(const std::vector<Var<Real>>& responses, const std::vector<Var<Real>>& tracklets,
                         const MtcConfig& cfg);

}  // namespace art
