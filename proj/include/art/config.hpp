// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration as one JSON document. Parsing is strict: unknown keys
// and wrongly typed values are ConfigErrors. to_json always writes every
// field, so an echo of a parsed config is a complete record of the run.
//
//   {
//     "seed": 0, "precision": "f64",
//     "model": {T, H, W, C, K, d, heads, depth, ffn_mult, dropout},
//     "bank":  {n_prom, n_class, c_text, mu, eta, jitter, file},
//     "mtc":   {lambda, temporal_mode},
//     "synth": {n_parts, signature_strength, noise_sigma, speed, start_jitter, n_train, n_test},
//     "train": {gamma1, gamma2, lr, epochs, decay_every, decay, batch, max_steps,
//               prototype_reduction, threads, divergence_limit,
//               optimizer, adam_beta1, adam_beta2, adam_eps},
//     "flags": {pos_emb, use_sse, use_rssa, aggregation, single_thread}
//   }

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "art/trainer.hpp"
#include "json.hpp"

namespace art {

enum class Precision { f32, f64 };

struct RunConfig {
  std::uint64_t seed = 0;
  Precision precision = Precision::f64;
  ModelConfig model;
  SynthConfig synth;
  TrainConfig train;
  double bank_jitter = 0.3;
  std::optional<std::string> bank_file;  // unset: synthetic bank
  std::size_t n_train = 512;
  std::size_t n_test = 256;
  bool single_thread = false;

  // Desk-scale planted-trajectory task.
  static RunConfig defaults();
  // Copies shared fields (dims, seeds, thread count) into the sub-configs
  // and validates everything.
  void resolve();
  BankSpec bank_spec() const;
};

RunConfig parse_run_config(const nlohmann::ordered_json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& cfg);

nlohmann::ordered_json model_to_json(const ModelConfig& m);
ModelConfig model_from_json(const nlohmann::ordered_json& j);

std::string to_string(AggregationMode m);
std::string to_string(TemporalMode m);
std::string to_string(Precision p);

template <class Real>
ArtState<Real> make_state(const RunConfig& cfg);

}  // namespace art
