// SPDX-License-Identifier: Apache-2.0
#pragma once

// Plain gradient-descent training of the ART head on
//   L = L_v + L_con + gamma1 * L_MTC + gamma2 * L_sema
// with the agent bank stepped by its own rate and the served bank following
// it by EMA after every step.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "art/mtc_loss.hpp"
#include "art/synth_data.hpp"

namespace art {

enum class Optimizer { gd, adam };

struct TrainConfig {
  double gamma1 = 5.0;
  double gamma2 = 5.0;
  double lr = 0.01;
  std::size_t epochs = 20;
  std::size_t decay_every = 10;  // epochs between x decay steps
  double decay = 0.1;
  std::size_t batch = 8;
  std::size_t max_steps = 0;  // 0: run all epochs
  std::uint64_t seed = 0;
  MtcConfig mtc;
  double mu = 0.99;
  std::optional<double> eta;  // agent-bank rate; defaults to lr
  PrototypeReduction prototype_reduction = PrototypeReduction::mean;
  std::size_t threads = 1;  // 1 keeps everything on the calling thread
  double divergence_limit = 1e6;
  // Head optimizer. Adam moments live only for the duration of train().
  Optimizer optimizer = Optimizer::gd;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;

  void validate() const;
  double bank_rate() const { return eta.value_or(lr); }
  double lr_at_epoch(std::size_t epoch) const;
};

struct StepReport {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double l_v = 0, l_con = 0, l_spatial = 0, l_temporal = 0, l_tracklet = 0, l_sema = 0;
  double total = 0;
  double grad_norm = 0;
  double acc = 0;
  double wall_ms = 0;

  double l_mtc() const { return l_spatial + l_temporal + l_tracklet; }
};

inline constexpr const char* kMetricsHeader =
    "step,epoch,l_v,l_con,l_spatial,l_temporal,l_tracklet,l_sema,total,grad_norm,acc";

std::string metrics_row(const StepReport& r);

template <class Real>
struct ArtState {
  ModelConfig model;
  ParamStore<Real> params;
  SemanticBank<Real> bank;
};

template <class Real>
struct SampleLoss {
  Var<Real> l_v, l_con, l_video, l_prot, l_sema;
  MtcTerms<Real> mtc;  // unset members when the model has no tracklets
  Var<Real> total;
};

// Full objective for one sample's forward outputs.
template <class Real>
SampleLoss<Real> loss_total(const Bound<Real>& p, const ModelConfig& model, const ArtOutputs<Real>& out,
                            std::size_t label, const TrainConfig& cfg);

// Weighted sum of already-computed components (for bookkeeping checks).
double combine_losses(double l_v, double l_con, double l_mtc, double l_sema, double gamma1, double gamma2);

struct EvalResult {
  double top1 = 0;
  double mean_class = 0;
  std::optional<double> hit_rate;
  std::optional<double> adjacent_cos;  // mean adjacent-frame response cosine
  std::vector<double> per_class;       // NaN for classes absent from the set
  std::size_t n = 0;
};

// Top-1 and mean per-class accuracy from raw logits (argmax, lowest index
// wins ties). Classes absent from `labels` are left out of the mean.
EvalResult score_logits(const std::vector<std::vector<double>>& logits, const std::vector<std::size_t>& labels,
                        std::size_t n_class);

template <class Real>
EvalResult evaluate(const ArtState<Real>& state, const std::vector<SynthSample<Real>>& data, int radius = 1);

struct TrainIo {
  std::filesystem::path out_dir;  // empty: no files
  bool quiet = true;
  std::function<void(const StepReport&)> on_step;
};

template <class Real>
struct TrainResult {
  std::vector<StepReport> steps;
  double final_train_accuracy = 0;
};

template <class Real>
TrainResult<Real> train(ArtState<Real>& state, const std::vector<SynthSample<Real>>& data, const TrainConfig& cfg,
                        const TrainIo& io = {});

// Checkpoint directory: parameter files + manifest.json, bank_s0.artt,
// bank_s.artt and state.json (model config, bank momentum).
template <class Real>
void save_checkpoint(const std::filesystem::path& dir, const ArtState<Real>& state);

template <class Real>
ArtState<Real> load_checkpoint(const std::filesystem::path& dir);

}  // namespace art
