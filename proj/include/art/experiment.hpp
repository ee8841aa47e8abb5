// SPDX-License-Identifier: Apache-2.0
#pragma once

// One-call experiment runs (data generation, training, held-out evaluation)
// and the component ablation grid built from config flags alone.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "art/config.hpp"

namespace art {

enum class AblationSetting {
  baseline,  // class token only
  rssa,      // + region responses, unweighted temporal sum
  no_sse,    // rssa without semantic enhancement
  ta,        // rssa with saliency-weighted aggregation
  full,      // ta plus the MTC loss
};

std::string setting_name(AblationSetting s);
std::vector<AblationSetting> all_settings();

// Flags for a setting on top of `base`. The MTC weight of the full setting is
// base.train.gamma1; every other setting trains with gamma1 = 0.
RunConfig apply_setting(RunConfig base, AblationSetting s);

struct RunOutcome {
  EvalResult test;
  double final_train_accuracy = 0;
  std::vector<StepReport> steps;
  double seconds = 0;
};

// Train split: samples [0, n_train); test split: [n_train, n_train + n_test).
template <class Real>
RunOutcome run_experiment(const RunConfig& cfg, const TrainIo& io = {});

// Dispatches on cfg.precision.
RunOutcome run_experiment_any(const RunConfig& cfg, const TrainIo& io = {});

struct AblationRow {
  std::string group;    // "settings", "K", "lambda"
  std::string setting;  // setting name or swept value
  std::size_t K = 0;
  double lambda = 0;
  std::optional<RunOutcome> outcome;
  std::string error;  // non-empty when the cell failed
};

// Five settings, K in {1, 2, 3, 4} and lambda in {0.2, 0.4, 0.6, 0.8}, all
// from `base`. Failed cells are recorded and the grid continues.
std::vector<AblationRow> run_ablation(const RunConfig& base);

nlohmann::ordered_json eval_to_json(const EvalResult& r);
nlohmann::ordered_json ablation_to_json(const std::vector<AblationRow>& rows);
std::string ablation_to_csv(const std::vector<AblationRow>& rows);

}  // namespace art
