// SPDX-License-Identifier: Apache-2.0
#include "art/experiment.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "art/log.hpp"

namespace art {

std::string setting_name(AblationSetting s) {
  switch (s) {
    case AblationSetting::baseline: return "baseline";
    case AblationSetting::rssa: return "+RSSA";
    case AblationSetting::no_sse: return "-SSE";
    case AblationSetting::ta: return "+TA";
    case AblationSetting::full: return "+MTC";
  }
  return "?";
}

std::vector<AblationSetting> all_settings() {
  return {AblationSetting::baseline, AblationSetting::rssa, AblationSetting::no_sse, AblationSetting::ta,
          AblationSetting::full};
}

RunConfig apply_setting(RunConfig c, AblationSetting s) {
  const double gamma1 = c.train.gamma1;
  c.model.use_rssa = s != AblationSetting::baseline;
  c.model.use_sse = s != AblationSetting::no_sse;
  c.model.aggregation = (s == AblationSetting::ta || s == AblationSetting::full) ? AggregationMode::literal
                                                                                  : AggregationMode::sum;
  c.train.gamma1 = s == AblationSetting::full ? gamma1 : 0.0;
  c.resolve();
  return c;
}

template <class Real>
RunOutcome run_experiment(const RunConfig& cfg, const TrainIo& io) {
  const auto t0 = std::chrono::steady_clock::now();
  ArtState<Real> state = make_state<Real>(cfg);
  const auto train_set = generate<Real>(cfg.synth, cfg.n_train, 0);
  RunOutcome out;
  TrainResult<Real> tr = train(state, train_set, cfg.train, io);
  out.final_train_accuracy = tr.final_train_accuracy;
  out.steps = std::move(tr.steps);
  if (cfg.n_test > 0) out.test = evaluate(state, generate<Real>(cfg.synth, cfg.n_test, cfg.n_train));
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

RunOutcome run_experiment_any(const RunConfig& cfg, const TrainIo& io) {
  return cfg.precision == Precision::f32 ? run_experiment<float>(cfg, io) : run_experiment<double>(cfg, io);
}

std::vector<AblationRow> run_ablation(const RunConfig& base) {
  std::vector<AblationRow> rows;
  auto run_cell = [&](std::string group, std::string setting, const std::function<RunConfig()>& make) {
    AblationRow row;
    row.group = std::move(group);
    row.setting = std::move(setting);
    try {
      const RunConfig cfg = make();
      row.K = cfg.model.K;
      row.lambda = cfg.train.mtc.lambda;
      log::info("ablation cell " + row.group + "=" + row.setting);
      row.outcome = run_experiment_any(cfg);
    } catch (const std::exception& e) {
      row.error = e.what();
      log::warn("ablation cell " + row.group + "=" + row.setting + " failed: " + row.error);
    }
    rows.push_back(std::move(row));
  };
  for (AblationSetting s : all_settings())
    run_cell("settings", setting_name(s), [&] { return apply_setting(base, s); });
  for (std::size_t k : {1, 2, 3, 4})
    run_cell("K", std::to_string(k), [&] {
      RunConfig c = base;
      c.model.K = k;
      return apply_setting(c, AblationSetting::full);
    });
  for (double lambda : {0.2, 0.4, 0.6, 0.8}) {
    std::ostringstream name;
    name << lambda;
    run_cell("lambda", name.str(), [&] {
      RunConfig c = base;
      c.train.mtc.lambda = lambda;
      return apply_setting(c, AblationSetting::full);
    });
  }
  return rows;
}

namespace {
nlohmann::ordered_json number_or_null(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}
}  // namespace

nlohmann::ordered_json eval_to_json(const EvalResult& r) {
  nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
  for (double v : r.per_class) per_class.push_back(number_or_null(v));
  return {{"n", r.n},
          {"top1", r.top1},
          {"mean_class", r.mean_class},
          {"per_class", per_class},
          {"hit_rate", number_or_null(r.hit_rate)},
          {"adjacent_cos", number_or_null(r.adjacent_cos)}};
}

nlohmann::ordered_json ablation_to_json(const std::vector<AblationRow>& rows) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json j{{"group", row.group}, {"setting", row.setting}, {"K", row.K}, {"lambda", row.lambda}};
    if (row.outcome) {
      j["status"] = "ok";
      j["top1"] = row.outcome->test.top1;
      j["mean_class"] = row.outcome->test.mean_class;
      j["hit_rate"] = number_or_null(row.outcome->test.hit_rate);
      j["adjacent_cos"] = number_or_null(row.outcome->test.adjacent_cos);
      j["train_accuracy"] = row.outcome->final_train_accuracy;
      j["steps"] = row.outcome->steps.size();
    } else {
      j["status"] = "failed";
      j["error"] = row.error;
    }
    out.push_back(std::move(j));
  }
  return out;
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "group,setting,K,lambda,status,top1,mean_class,hit_rate,adjacent_cos\n";
  for (const auto& row : rows) {
    os << row.group << ',' << row.setting << ',' << row.K << ',' << row.lambda << ',';
    if (!row.outcome) {
      os << "failed,,,,\n";
      continue;
    }
    const EvalResult& e = row.outcome->test;
    os << "ok," << e.top1 << ',' << e.mean_class << ',';
    if (e.hit_rate) os << *e.hit_rate;
    os << ',';
    if (e.adjacent_cos) os << *e.adjacent_cos;
    os << '\n';
  }
  return os.str();
}

template RunOutcome run_experiment<float>(const RunConfig&, const TrainIo&);
template RunOutcome run_experiment<double>(const RunConfig&, const TrainIo&);

}  // namespace art
