// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic fine-grained "videos": Gaussian background features with
// n_parts planted part signatures that move along class-specific
// trajectories. Every class shares the same signatures, so the label is
// carried by motion alone.
//
// Trajectories: part p starts near a fixed anchor (row H/2, column
// (p+1)W/(n_parts+1)) with uniform jitter, then moves `speed` cells per frame
// along one of eight compass directions, reflecting off the grid border.
// Class c picks direction (combo * n_parts + p) mod 8 with
// combo = c mod (8 / n_parts); the turn index c / (8 / n_parts) rotates the
// direction by 90 degrees per unit from the middle frame on.

#include <array>
#include <cstdint>
#include <vector>

#include "art/model.hpp"

namespace art {

struct SynthConfig {
  std::size_t T = 8, H = 8, W = 8, C = 16;
  std::size_t n_parts = 2;
  std::size_t n_classes = 4;
  double signature_strength = 2.0;
  double noise_sigma = 0.5;
  int speed = 1;
  int start_jitter = 1;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t max_classes() const;
};

using GridPos = std::array<int, 2>;  // (row, col)

template <class Real>
struct SynthSample {
  FeatureVolume<Real> video;
  std::size_t label = 0;
  std::vector<std::vector<GridPos>> truth;  // [part][frame]
};

// Orthonormal part signatures (n_parts, C), fixed by the config seed.
std::vector<std::vector<double>> part_signatures(const SynthConfig& cfg);

// Planted positions for one class and start; pure function of its inputs.
std::vector<std::vector<GridPos>> class_trajectories(const SynthConfig& cfg, std::size_t label,
                                                     const std::vector<GridPos>& starts);

// Sample `index` of the stream; a pure function of (cfg, index).
template <class Real>
SynthSample<Real> generate_one(const SynthConfig& cfg, std::size_t index);

// Samples first_index .. first_index + n - 1.
template <class Real>
std::vector<SynthSample<Real>> generate(const SynthConfig& cfg, std::size_t n, std::size_t first_index = 0);

// Query-to-part assignment maximizing total hits over a whole set of samples,
// searched exhaustively over injective maps (K <= 4). Returns, per part, the
// assigned query.
struct HitAssignment {
  std::vector<std::size_t> query_for_part;
  std::size_t hits = 0;
  std::size_t total = 0;
  double rate() const { return total ? double(hits) / double(total) : 0.0; }
};

// hit_counts[q][p] = number of frames where query q's argmax is within
// `radius` (Chebyshev) of part p's planted position.
template <class Real>
void accumulate_hits(const std::vector<Tensor<Real>>& attn, const std::vector<std::vector<GridPos>>& truth,
                     std::size_t grid_w, int radius, std::vector<std::vector<std::size_t>>& hit_counts);

HitAssignment best_assignment(const std::vector<std::vector<std::size_t>>& hit_counts, std::size_t frames_total);

// Single-sample hit rate: attention maps T x (K, H*W) against truth.
template <class Real>
double tracking_hit_rate(const std::vector<Tensor<Real>>& attn, const std::vector<std::vector<GridPos>>& truth,
                         std::size_t grid_w, int radius = 1);

}  // namespace art
