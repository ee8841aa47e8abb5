// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <set>

#include "art/dataset_io.hpp"
#include "art/synth_data.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace art;
using namespace art::test;

namespace {

SynthConfig clean_config() {
  SynthConfig c;
  c.noise_sigma = 0;
  c.signature_strength = 1;
  c.seed = 5;
  return c;
}

const double* cell(const Tensor<double>& x, const SynthConfig& c, std::size_t t, int row, int col) {
  return x.ptr() + ((t * c.H + std::size_t(row)) * c.W + std::size_t(col)) * c.C;
}

// One-hot attention maps (K, H*W) per frame from per-query argmax cells.
std::vector<Tensor<double>> maps_from(const std::vector<std::vector<GridPos>>& cells, const SynthConfig& c) {
  const std::size_t k = cells.size(), t = cells[0].size();
  std::vector<Tensor<double>> out(t, Tensor<double>({k, c.H * c.W}));
  for (std::size_t q = 0; q < k; ++q)
    for (std::size_t f = 0; f < t; ++f) out[f](q, std::size_t(cells[q][f][0]) * c.W + std::size_t(cells[q][f][1])) = 1;
  return out;
}

}  // namespace

TEST_SUITE("synth_data") {
  TEST_CASE("generation is a pure function of config and index") {
    SynthConfig c;
    c.seed = 17;
    const auto a = generate<double>(c, 6, 10), b = generate<double>(c, 6, 10);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(bit_equal(a[i].video.x, b[i].video.x));
      CHECK(a[i].label == b[i].label);
      CHECK(a[i].truth == b[i].truth);
      const auto one = generate_one<double>(c, 10 + i);
      CHECK(bit_equal(one.video.x, a[i].video.x));
    }
    CHECK_FALSE(bit_equal(generate_one<double>(c, 0).video.x, generate_one<double>(c, 1).video.x));
  }

  TEST_CASE("clean planting") {
    const SynthConfig c = clean_config();
    const auto sig = part_signatures(c);
    for (const auto& s : generate<double>(c, 20)) {
      for (std::size_t t = 0; t < c.T; ++t) {
        const GridPos a = s.truth[0][t], b = s.truth[1][t];
        for (std::size_t p = 0; p < 2; ++p) {
          if (a == b) continue;
          const GridPos pos = s.truth[p][t];
          const double* v = cell(s.video.x, c, t, pos[0], pos[1]);
          double dot = 0, n = 0;
          for (std::size_t j = 0; j < c.C; ++j) {
            dot += v[j] * sig[p][j];
            n += v[j] * v[j];
          }
          CHECK(dot / std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-12));
        }
        for (std::size_t r = 0; r < c.H; ++r)
          for (std::size_t col = 0; col < c.W; ++col) {
            const GridPos here{int(r), int(col)};
            if (here == a || here == b) continue;
            const double* v = cell(s.video.x, c, t, here[0], here[1]);
            for (std::size_t j = 0; j < c.C; ++j) REQUIRE(v[j] == 0.0);
          }
      }
    }
  }

  TEST_CASE("signatures are orthonormal") {
    SynthConfig c;
    c.n_parts = 3;
    c.n_classes = 2;
    const auto sig = part_signatures(c);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double dot = 0;
        for (std::size_t k = 0; k < c.C; ++k) dot += sig[i][k] * sig[j][k];
        CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) <= 1e-12);
      }
  }

  TEST_CASE("labels and positions stay in range") {
    SynthConfig c;
    c.seed = 2;
    std::set<std::size_t> seen;
    for (const auto& s : generate<double>(c, 100)) {
      REQUIRE(s.label < 4);
      seen.insert(s.label);
      REQUIRE(s.truth.size() == c.n_parts);
      for (const auto& part : s.truth) {
        REQUIRE(part.size() == c.T);
        for (const auto& pos : part) {
          REQUIRE(pos[0] >= 0);
          REQUIRE(pos[0] < int(c.H));
          REQUIRE(pos[1] >= 0);
          REQUIRE(pos[1] < int(c.W));
        }
      }
    }
    CHECK(seen.size() == 4);
  }

  TEST_CASE("trajectories reflect and keep speed") {
    SynthConfig c;
    c.speed = 2;
    c.T = 20;
    for (std::size_t label = 0; label < c.n_classes; ++label) {
      const auto tr = class_trajectories(c, label, {{4, 1}, {4, 6}});
      for (const auto& part : tr)
        for (std::size_t t = 1; t < part.size(); ++t) {
          REQUIRE(std::abs(part[t][0] - part[t - 1][0]) <= 2);
          REQUIRE(std::abs(part[t][1] - part[t - 1][1]) <= 2);
          REQUIRE(part[t][0] >= 0);
          REQUIRE(part[t][0] < 8);
          REQUIRE(part[t][1] >= 0);
          REQUIRE(part[t][1] < 8);
        }
    }
  }

  TEST_CASE("classes differ only in motion") {
    SynthConfig c = clean_config();
    std::vector<std::vector<std::vector<GridPos>>> per_class(c.n_classes);
    for (std::size_t label = 0; label < c.n_classes; ++label)
      per_class[label] = class_trajectories(c, label, {{4, 2}, {4, 5}});
    for (std::size_t a = 0; a < c.n_classes; ++a) {
      CHECK(per_class[a][0][0] == GridPos{4, 2});
      for (std::size_t b = a + 1; b < c.n_classes; ++b) CHECK(per_class[a] != per_class[b]);
    }
  }

  TEST_CASE("config errors") {
    SynthConfig c;
    c.speed = 8;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SynthConfig{};
    c.n_parts = 17;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SynthConfig{};
    c.noise_sigma = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("noise-free planted cell is the unique correlation maximizer") {
    SynthConfig c = clean_config();
    c.signature_strength = 3;
    const auto sig = part_signatures(c);
    for (const auto& s : generate<double>(c, 10))
      for (std::size_t p = 0; p < c.n_parts; ++p)
        for (std::size_t t = 0; t < c.T; ++t) {
          double best = -1e300;
          std::vector<GridPos> argmax;
          for (int r = 0; r < int(c.H); ++r)
            for (int col = 0; col < int(c.W); ++col) {
              const double* v = cell(s.video.x, c, t, r, col);
              double dot = 0;
              for (std::size_t j = 0; j < c.C; ++j) dot += v[j] * sig[p][j];
              if (dot > best + 1e-12) {
                best = dot;
                argmax = {{r, col}};
              } else if (std::abs(dot - best) <= 1e-12) {
                argmax.push_back({r, col});
              }
            }
          REQUIRE(argmax.size() == 1);
          REQUIRE(argmax[0] == s.truth[p][t]);
        }
  }

  TEST_CASE("hit rate examples") {
    SynthConfig c;
    c.T = 4;
    const std::vector<std::vector<GridPos>> truth{{{1, 1}, {1, 2}, {1, 3}, {1, 4}}, {{6, 6}, {5, 6}, {4, 6}, {3, 6}}};
    CHECK(tracking_hit_rate(maps_from(truth, c), truth, c.W) == 1.0);

    const std::vector<std::vector<GridPos>> far{{{7, 0}, {7, 0}, {7, 0}, {7, 0}}, {{0, 7}, {0, 7}, {0, 7}, {0, 7}}};
    CHECK(tracking_hit_rate(maps_from(far, c), truth, c.W) == 0.0);

    // Query 0 hits its part in frames 0-1 only, query 1 in frames 2-3 only.
    auto half = truth;
    half[0][2] = half[0][3] = {7, 7};
    half[1][0] = half[1][1] = {0, 7};
    CHECK(tracking_hit_rate(maps_from(half, c), truth, c.W) == 0.5);

    // Chebyshev radius 1 accepts diagonal neighbours, radius 0 does not.
    auto shifted = truth;
    for (auto& q : shifted)
      for (auto& pos : q) pos = {pos[0] + (pos[0] < 7 ? 1 : -1), pos[1] + (pos[1] < 7 ? 1 : -1)};
    CHECK(tracking_hit_rate(maps_from(shifted, c), truth, c.W, 1) == 1.0);
    CHECK(tracking_hit_rate(maps_from(shifted, c), truth, c.W, 0) == 0.0);
  }

  TEST_CASE("hit rate is invariant to query relabeling") {
    SynthConfig c;
    Gen g(91);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t k = g.pick(1, 4);
      std::vector<std::vector<GridPos>> truth(g.pick(1, k), std::vector<GridPos>(c.T));
      for (auto& part : truth)
        for (auto& pos : part) pos = {int(g.pick(0, 7)), int(g.pick(0, 7))};
      std::vector<Tensor<double>> attn;
      for (std::size_t t = 0; t < c.T; ++t) {
        Tensor<double> a({k, 64});
        for (auto& v : a.data()) v = g.uniform(0, 1);
        attn.push_back(a);
      }
      const auto perm = g.permutation(k);
      std::vector<Tensor<double>> permuted;
      for (const auto& a : attn) permuted.push_back(permute_rows(a, perm));
      REQUIRE(tracking_hit_rate(attn, truth, c.W) == tracking_hit_rate(permuted, truth, c.W));
    }
  }

  TEST_CASE("dataset files round trip") {
    TempDir dir("dataset");
    SynthConfig c;
    c.seed = 8;
    const std::vector<DatasetSplit<double>> splits{{"train", 0, generate<double>(c, 5, 0)},
                                                   {"test", 5, generate<double>(c, 3, 5)}};
    write_dataset(dir.path(), splits, nlohmann::ordered_json{{"seed", 8}});
    for (const auto& split : splits) {
      const auto back = read_dataset<double>(dir.path(), split.name);
      REQUIRE(back.size() == split.samples.size());
      for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(bit_equal(back[i].video.x, split.samples[i].video.x));
        CHECK(back[i].label == split.samples[i].label);
        CHECK(back[i].truth == split.samples[i].truth);
      }
    }
    CHECK_THROWS_AS(read_dataset<double>(dir.path(), "val"), FormatError);
  }
}
