// SPDX-License-Identifier: Apache-2.0
#include "art/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "art/rng.hpp"

namespace art {
namespace {

constexpr std::array<GridPos, 8> kCompass{{{0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}}};

int reflect(int x, int& v, int extent) {
  const int hi = extent - 1;
  if (hi == 0) {
    v = 0;
    return 0;
  }
  // Speed < extent keeps a single bounce sufficient.
  if (x < 0) {
    x = -x;
    v = -v;
  } else if (x > hi) {
    x = 2 * hi - x;
    v = -v;
  }
  return x;
}

}  // namespace

std::size_t SynthConfig::max_classes() const { return n_parts == 0 ? 0 : std::max<std::size_t>(1, 8 / n_parts) * 4; }

void SynthConfig::validate() const {
  if (T == 0 || H == 0 || W == 0 || C == 0) throw ConfigError("synth dims must be >= 1");
  if (n_parts == 0) throw ConfigError("synth needs at least one part");
  if (n_parts > C) throw ConfigError("orthonormal signatures need n_parts <= C");
  if (n_classes == 0) throw ConfigError("synth needs at least one class");
  if (n_classes > max_classes())
    throw ConfigError("synth supports at most " + std::to_string(max_classes()) + " classes for " +
                      std::to_string(n_parts) + " parts");
  if (speed < 0) throw ConfigError("speed must be non-negative");
  if (speed >= static_cast<int>(std::min(H, W)) && !(H == 1 && W == 1 && speed == 0))
    throw ConfigError("infeasible trajectory: speed " + std::to_string(speed) + " does not fit a " +
                      std::to_string(H) + "x" + std::to_string(W) + " grid");
  if (start_jitter < 0) throw ConfigError("start_jitter must be non-negative");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
}

std::vector<std::vector<double>> part_signatures(const SynthConfig& cfg) {
  auto rng = substream(cfg.seed, "signatures");
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::vector<double>> sig;
  while (sig.size() < cfg.n_parts) {
    std::vector<double> v(cfg.C);
    for (auto& x : v) x = nd(rng);
    for (const auto& u : sig) {
      const double d = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= d * u[i];
    }
    const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (n < 1e-6) continue;
    for (auto& x : v) x /= n;
    sig.push_back(std::move(v));
  }
  return sig;
}

std::vector<std::vector<GridPos>> class_trajectories(const SynthConfig& cfg, std::size_t label,
                                                     const std::vector<GridPos>& starts) {
  const std::size_t cycle = std::max<std::size_t>(1, 8 / cfg.n_parts);
  const std::size_t combo = label % cycle;
  const std::size_t turn = label / cycle;
  std::vector<std::vector<GridPos>> out(cfg.n_parts);
  for (std::size_t p = 0; p < cfg.n_parts; ++p) {
    const GridPos dir = kCompass[(combo * cfg.n_parts + p) % 8];
    int vr = dir[0] * cfg.speed, vc = dir[1] * cfg.speed;
    int r = starts[p][0], c = starts[p][1];
    for (std::size_t t = 0; t < cfg.T; ++t) {
      if (t == cfg.T / 2 && turn > 0) {
        const GridPos turned = kCompass[(combo * cfg.n_parts + p + 2 * turn) % 8];
        vr = turned[0] * cfg.speed;
        vc = turned[1] * cfg.speed;
      }
      out[p].push_back({r, c});
      r = reflect(r + vr, vr, static_cast<int>(cfg.H));
      c = reflect(c + vc, vc, static_cast<int>(cfg.W));
    }
  }
  return out;
}

template <class Real>
SynthSample<Real> generate_one(const SynthConfig& cfg, std::size_t index) {
  cfg.validate();
  auto rng = substream(cfg.seed, "data", index);
  SynthSample<Real> s;
  s.label = std::uniform_int_distribution<std::size_t>(0, cfg.n_classes - 1)(rng);
  std::uniform_int_distribution<int> jit(-cfg.start_jitter, cfg.start_jitter);
  std::vector<GridPos> starts(cfg.n_parts);
  for (std::size_t p = 0; p < cfg.n_parts; ++p) {
    const int r0 = static_cast<int>(cfg.H / 2);
    const int c0 = static_cast<int>((p + 1) * cfg.W / (cfg.n_parts + 1));
    starts[p] = {std::clamp(r0 + jit(rng), 0, int(cfg.H) - 1), std::clamp(c0 + jit(rng), 0, int(cfg.W) - 1)};
  }
  s.truth = class_trajectories(cfg, s.label, starts);

  const auto sig = part_signatures(cfg);
  s.video.x = Tensor<Real>({cfg.T, cfg.H, cfg.W, cfg.C});
  if (cfg.noise_sigma > 0) {
    std::normal_distribution<double> nd(0.0, cfg.noise_sigma);
    for (auto& v : s.video.x.data()) v = static_cast<Real>(nd(rng));
  }
  for (std::size_t p = 0; p < cfg.n_parts; ++p)
    for (std::size_t t = 0; t < cfg.T; ++t) {
      const auto [r, c] = s.truth[p][t];
      Real* cell = s.video.x.ptr() + ((t * cfg.H + std::size_t(r)) * cfg.W + std::size_t(c)) * cfg.C;
      for (std::size_t j = 0; j < cfg.C; ++j) cell[j] += static_cast<Real>(cfg.signature_strength * sig[p][j]);
    }
  return s;
}

template <class Real>
std::vector<SynthSample<Real>> generate(const SynthConfig& cfg, std::size_t n, std::size_t first_index) {
  std::vector<SynthSample<Real>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_one<Real>(cfg, first_index + i));
  return out;
}

template <class Real>
void accumulate_hits(const std::vector<Tensor<Real>>& attn, const std::vector<std::vector<GridPos>>& truth,
                     std::size_t grid_w, int radius, std::vector<std::vector<std::size_t>>& hit_counts) {
  if (attn.empty()) return;
  const std::size_t k = attn.front().dim(0);
  const std::size_t parts = truth.size();
  if (hit_counts.empty()) hit_counts.assign(k, std::vector<std::size_t>(parts, 0));
  if (hit_counts.size() != k || hit_counts.front().size() != parts)
    throw ContractError("accumulate_hits: inconsistent query or part count");
  for (std::size_t t = 0; t < attn.size(); ++t) {
    const Tensor<Real>& a = attn[t];
    const std::size_t cells = a.dim(1);
    for (std::size_t q = 0; q < k; ++q) {
      const Real* row = a.ptr() + q * cells;
      const std::size_t best = static_cast<std::size_t>(std::max_element(row, row + cells) - row);
      const int br = static_cast<int>(best / grid_w), bc = static_cast<int>(best % grid_w);
      for (std::size_t p = 0; p < parts; ++p) {
        const auto [tr, tc] = truth[p].at(t);
        if (std::max(std::abs(br - tr), std::abs(bc - tc)) <= radius) ++hit_counts[q][p];
      }
    }
  }
}

HitAssignment best_assignment(const std::vector<std::vector<std::size_t>>& hit_counts, std::size_t frames_total) {
  HitAssignment best;
  if (hit_counts.empty()) return best;
  const std::size_t k = hit_counts.size(), parts = hit_counts.front().size();
  if (parts > k) throw ContractError("hit rate needs at least as many queries as parts");
  if (k > 8) throw ContractError("exhaustive assignment limited to K <= 8");
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  bool first = true;
  do {
    std::size_t hits = 0;
    for (std::size_t p = 0; p < parts; ++p) hits += hit_counts[perm[p]][p];
    if (first || hits > best.hits) {
      best.hits = hits;
      best.query_for_part.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(parts));
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  best.total = frames_total * parts;
  return best;
}

template <class Real>
double tracking_hit_rate(const std::vector<Tensor<Real>>& attn, const std::vector<std::vector<GridPos>>& truth,
                         std::size_t grid_w, int radius) {
  std::vector<std::vector<std::size_t>> counts;
  accumulate_hits(attn, truth, grid_w, radius, counts);
  return best_assignment(counts, attn.size()).rate();
}

#define ART_INSTANTIATE(R)                                                                                      \
  template SynthSample<R> generate_one(const SynthConfig&, std::size_t);                                        \
  template std::vector<SynthSample<R>> generate(const SynthConfig&, std::size_t, std::size_t);                  \
  template void accumulate_hits(const std::vector<Tensor<R>>&, const std::vector<std::vector<GridPos>>&,        \
                                std::size_t, int, std::vector<std::vector<std::size_t>>&);                      \
  template double tracking_hit_rate(const std::vector<Tensor<R>>&, const std::vector<std::vector<GridPos>>&,    \
                                    std::size_t, int);

ART_INSTANTIATE(float)
ART_INSTANTIATE(double)
#undef ART_INSTANTIATE

}  // namespace art
