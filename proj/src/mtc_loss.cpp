// SPDX-License-Identifier: Apache-2.0
#include "art/mtc_loss.hpp"

#include <atomic>

#include "art/log.hpp"

namespace art {

void MtcConfig::validate() const {
  if (!(lambda >= -1.0 && lambda <= 1.0)) throw ConfigError("mtc lambda must lie in [-1, 1]");
}

namespace {

template <class Real>
Var<Real> zero() {
  return Var<Real>::constant(Tensor<Real>::scalar(Real(0)));
}

void warn_once(std::atomic<bool>& flag, const char* msg) {
  if (!flag.exchange(true)) log::warn(msg);
}

template <class Real>
void check_responses(const std::vector<Var<Real>>& responses, const char* op) {
  if (responses.empty()) throw ContractError(std::string(op) + ": no frames");
  const Shape& first = responses.front().dims();
  if (first.size() != 2) throw ShapeError(std::string(op) + ": responses must be (K, C)");
  for (const auto& r : responses)
    if (r.dims() != first) throw ContractError(std::string(op) + ": inconsistent response shapes across frames");
}

// Sum of the off-diagonal entries of a square matrix.
template <class Real>
Var<Real> off_diagonal_sum(const Var<Real>& m) {
  const std::size_t n = m.dim(0);
  Tensor<Real> mask({n, n}, Real(1));
  for (std::size_t i = 0; i < n; ++i) mask(i, i) = Real(0);
  return sum(mul(m, Var<Real>::constant(std::move(mask))));
}

}  // namespace

template <class Real>
Var<Real> spatial_loss(const std::vector<Var<Real>>& responses) {
  static std::atomic<bool> warned{false};
  check_responses(responses, "spatial_loss");
  const std::size_t t_count = responses.size(), k = responses.front().dim(0);
  if (k < 2) {
    warn_once(warned, "spatial_loss: K == 1, term is 0");
    return zero<Real>();
  }
  Var<Real> acc;
  for (const auto& r : responses) {
    const Var<Real> s = off_diagonal_sum(cosine_matrix(r, r));
    acc = acc.valid() ? add(acc, s) : s;
  }
  return scale(acc, Real(1) / static_cast<Real>(t_count * k * (k - 1)));
}

template <class Real>
Var<Real> adjacent_similarity(const std::vector<Var<Real>>& responses) {
  check_responses(responses, "adjacent_similarity");
  const std::size_t t_count = responses.size(), k = responses.front().dim(0);
  if (t_count < 2) throw ContractError("adjacent_similarity: needs T >= 2");
  Var<Real> acc;
  for (std::size_t t = 0; t + 1 < t_count; ++t) {
    const Var<Real> s = sum(cosine_rows(responses[t], responses[t + 1]));
    acc = acc.valid() ? add(acc, s) : s;
  }
  return scale(acc, Real(1) / static_cast<Real>(k * (t_count - 1)));
}

template <class Real>
Var<Real> temporal_loss(const std::vector<Var<Real>>& responses, const MtcConfig& cfg) {
  static std::atomic<bool> warned{false};
  cfg.validate();
  check_responses(responses, "temporal_loss");
  if (responses.size() < 2) {
    warn_once(warned, "temporal_loss: T == 1, term is 0");
    return zero<Real>();
  }
  const Var<Real> m = adjacent_similarity(responses);
  const Real lambda = static_cast<Real>(cfg.lambda);
  if (cfg.temporal_mode == TemporalMode::literal) return add_scalar(m, -lambda);
  return relu(add_scalar(scale(m, Real(-1)), lambda));
}

template <class Real>
Var<Real> tracklet_loss(const std::vector<Var<Real>>& tracklets) {
  static std::atomic<bool> warned{false};
  check_responses(tracklets, "tracklet_loss");
  const std::size_t k = tracklets.size();
  if (k < 2) {
    warn_once(warned, "tracklet_loss: K == 1, term is 0");
    return zero<Real>();
  }
  std::vector<Var<Real>> flat;
  flat.reserve(k);
  for (const auto& tr : tracklets) flat.push_back(reshape(tr, {1, tr.size()}));
  const Var<Real> stacked = concat(flat, 0);
  return scale(off_diagonal_sum(cosine_matrix(stacked, stacked)), Real(1) / static_cast<Real>(k * (k - 1)));
}

template <class Real>
MtcTerms<Real> mtc_total(const std::vector<Var<Real>>& responses, const std::vector<Var<Real>>& tracklets,
                         const MtcConfig& cfg) {
  MtcTerms<Real> out;
  out.spatial = spatial_loss(responses);
  out.temporal = temporal_loss(responses, cfg);
  out.tracklet = tracklet_loss(tracklets);
  out.total = add(add(out.spatial, out.temporal), out.tracklet);
  return out;
}

#define ART_INSTANTIATE(R)                                                                       \
  template Var<R> spatial_loss(const std::vector<Var<R>>&);                                      \
  template Var<R> adjacent_similarity(const std::vector<Var<R>>&);                               \
  template Var<R> temporal_loss(const std::vector<Var<R>>&, const MtcConfig&);                   \
  template Var<R> tracklet_loss(const std::vector<Var<R>>&);                                     \
  template MtcTerms<R> mtc_total(const std::vector<Var<R>>&, const std::vector<Var<R>>&, const MtcConfig&);

ART_INSTANTIATE(float)
ART_INSTANTIATE(double)
#undef ART_INSTANTIATE

}  // namespace art
