// SPDX-License-Identifier: Apache-2.0
#include "art/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "art/config.hpp"
#include "art/log.hpp"
#include "art/rng.hpp"
#include "art/tensor_io.hpp"
#include "json.hpp"

namespace art {

void TrainConfig::validate() const {
  if (!(gamma1 >= 0) || !(gamma2 >= 0)) throw ConfigError("gamma1 and gamma2 must be >= 0");
  if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
  if (eta && (!(*eta >= 0) || !std::isfinite(*eta))) throw ConfigError("eta must be finite and >= 0");
  if (!(mu >= 0 && mu <= 1)) throw ConfigError("mu must lie in [0, 1]");
  if (!(decay > 0) || !std::isfinite(decay)) throw ConfigError("decay must be positive");
  if (decay_every == 0) throw ConfigError("decay_every must be positive");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (threads == 0) throw ConfigError("threads must be positive");
  if (!(divergence_limit > 0)) throw ConfigError("divergence_limit must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
    throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  mtc.validate();
}

double TrainConfig::lr_at_epoch(std::size_t epoch) const {
  return lr * std::pow(decay, static_cast<double>(epoch / decay_every));
}

std::string metrics_row(const StepReport& r) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << r.step << ',' << r.epoch << ',' << r.l_v << ',' << r.l_con << ',' << r.l_spatial << ',' << r.l_temporal
     << ',' << r.l_tracklet << ',' << r.l_sema << ',' << r.total << ',' << r.grad_norm << ',' << r.acc;
  return os.str();
}

double combine_losses(double l_v, double l_con, double l_mtc, double l_sema, double gamma1, double gamma2) {
  return l_v + l_con + gamma1 * l_mtc + gamma2 * l_sema;
}

template <class Real>
SampleLoss<Real> loss_total(const Bound<Real>& p, const ModelConfig& model, const ArtOutputs<Real>& out,
                            std::size_t label, const TrainConfig& cfg) {
  if (label >= model.n_class) throw ContractError("label out of range");
  SampleLoss<Real> l;
  l.l_v = cross_entropy(out.logits_v, label);
  l.l_con = cross_entropy(out.logits_con, label);
  if (model.use_rssa) {
    l.mtc = mtc_total(out.responses, out.tracklets, cfg.mtc);
  } else {
    const auto zero = Var<Real>::constant(Tensor<Real>::scalar(Real(0)));
    l.mtc = {zero, zero, zero, zero};
  }
  l.l_video = video_consistency_loss(out.x_cls, p["bank.sa"], p["bank.proj"], label);
  const Var<Real> sim = prototype_similarity(prototype_mlp(p, p["proto.w"]), p["bank.sa"]);
  l.l_prot = prototype_consistency_loss(sim, cfg.prototype_reduction);
  l.l_sema = sema_loss(l.l_video, l.l_prot);
  l.total = add(add(l.l_v, l.l_con),
                add(scale(l.mtc.total, Real(cfg.gamma1)), scale(l.l_sema, Real(cfg.gamma2))));
  return l;
}

EvalResult score_logits(const std::vector<std::vector<double>>& logits, const std::vector<std::size_t>& labels,
                        std::size_t n_class) {
  if (logits.size() != labels.size()) throw ContractError("score_logits: logits and labels differ in length");
  if (logits.empty()) throw ContractError("score_logits: empty set");
  EvalResult r;
  r.n = logits.size();
  std::vector<std::size_t> seen(n_class, 0), right(n_class, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i].size() != n_class) throw ShapeError("score_logits: logit width differs from n_class");
    if (labels[i] >= n_class) throw ContractError("score_logits: label out of range");
    const bool hit = argmax_lowest(logits[i]) == labels[i];
    correct += hit;
    ++seen[labels[i]];
    right[labels[i]] += hit;
  }
  r.top1 = double(correct) / double(r.n);
  r.per_class.assign(n_class, std::numeric_limits<double>::quiet_NaN());
  double acc = 0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < n_class; ++c) {
    if (seen[c] == 0) {
      log::warn("class " + std::to_string(c) + " absent from evaluation set; excluded from mean accuracy");
      continue;
    }
    r.per_class[c] = double(right[c]) / double(seen[c]);
    acc += r.per_class[c];
    ++present;
  }
  r.mean_class = acc / double(present);
  return r;
}

template <class Real>
EvalResult evaluate(const ArtState<Real>& state, const std::vector<SynthSample<Real>>& data, int radius) {
  if (data.empty()) throw ContractError("evaluate: empty dataset");
  const ModelConfig& m = state.model;
  const Bound<Real> p = state.params.bind();
  std::vector<std::vector<double>> logits;
  std::vector<std::size_t> labels;
  std::vector<std::vector<std::size_t>> hits;
  std::size_t frames = 0;
  double adjacent = 0;
  const bool track = m.use_rssa && !data.front().truth.empty() && data.front().truth.size() <= m.K;
  for (const auto& s : data) {
    const ArtOutputs<Real> out = art_forward(p, m, state.bank.s, s.video);
    const auto& v = out.logits_con.value();
    logits.emplace_back(v.data().begin(), v.data().end());
    labels.push_back(s.label);
    if (m.use_rssa) {
      if (m.T > 1) adjacent += adjacent_similarity(out.responses).item();
      if (track) {
        accumulate_hits(out.attn, s.truth, m.W, radius, hits);
        frames += m.T;
      }
    }
  }
  EvalResult r = score_logits(logits, labels, m.n_class);
  if (m.use_rssa && m.T > 1) r.adjacent_cos = adjacent / double(data.size());
  if (track) r.hit_rate = best_assignment(hits, frames).rate();
  return r;
}

namespace {

std::size_t worker_count(const TrainConfig& cfg, std::size_t batch) {
  std::size_t n = cfg.threads;
  if (const char* env = std::getenv("ART_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return std::max<std::size_t>(1, std::min(n, batch));
}

template <class Real>
struct SampleResult {
  Bound<Real> bound;
  double l_v = 0, l_con = 0, l_spatial = 0, l_temporal = 0, l_tracklet = 0, l_sema = 0, total = 0;
  bool correct = false;
};

double checked(const char* component, double v) {
  if (!std::isfinite(v)) throw DivergenceError(std::string("non-finite loss component ") + component);
  return v;
}

template <class Real>
SampleResult<Real> run_sample(const ArtState<Real>& state, const SynthSample<Real>& sample, const TrainConfig& cfg,
                              Real inv_batch, std::mt19937_64* dropout_rng) {
  SampleResult<Real> r;
  Graph<Real> graph;
  GraphScope<Real> scope(graph);
  r.bound = state.params.bind();
  try {
    ForwardOptions opts{dropout_rng};
    const ArtOutputs<Real> out = art_forward(r.bound, state.model, state.bank.s, sample.video, opts);
    const SampleLoss<Real> l = loss_total(r.bound, state.model, out, sample.label, cfg);
    r.l_v = checked("l_v", l.l_v.item());
    r.l_con = checked("l_con", l.l_con.item());
    r.l_spatial = checked("l_spatial", l.mtc.spatial.item());
    r.l_temporal = checked("l_temporal", l.mtc.temporal.item());
    r.l_tracklet = checked("l_tracklet", l.mtc.tracklet.item());
    r.l_sema = checked("l_sema", l.l_sema.item());
    r.total = checked("total", l.total.item());
    const auto& lc = out.logits_con.value();
    r.correct = argmax_lowest(std::vector<double>(lc.data().begin(), lc.data().end())) == sample.label;
    graph.backward(scale(l.total, inv_batch));
  } catch (const DegenerateInputError& e) {
    throw DivergenceError(std::string("non-finite value during training step: ") + e.what());
  }
  return r;
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace

template <class Real>
TrainResult<Real> train(ArtState<Real>& state, const std::vector<SynthSample<Real>>& data, const TrainConfig& cfg,
                        const TrainIo& io) {
  cfg.validate();
  state.model.validate();
  if (data.empty()) throw ContractError("train: empty dataset");
  if (!state.params.has("bank.sa")) throw ContractError("train: parameter store lacks bank.sa");

  std::ofstream metrics;
  if (!io.out_dir.empty()) {
    std::filesystem::create_directories(io.out_dir / "checkpoints");
    metrics.open(io.out_dir / "metrics.csv");
    if (!metrics) throw FormatError("cannot write metrics.csv under " + io.out_dir.string());
    metrics << kMetricsHeader << '\n';
  }

  const std::size_t n = data.size();
  const std::size_t batch = std::min(cfg.batch, n);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  std::vector<std::size_t> order(n);
  TrainResult<Real> result;
  std::size_t step = 0;
  bool stop = false;
  std::vector<std::vector<Real>> moment1, moment2;
  if (cfg.optimizer == Optimizer::adam)
    for (const auto& e : state.params.entries()) {
      moment1.emplace_back(e.value.size(), Real(0));
      moment2.emplace_back(e.value.size(), Real(0));
    }

  for (std::size_t epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    auto order_rng = substream(cfg.seed, "order", epoch);
    std::shuffle(order.begin(), order.end(), order_rng);
    const double lr = cfg.lr_at_epoch(epoch);

    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      if (cfg.max_steps && step >= cfg.max_steps) {
        stop = true;
        break;
      }
      const auto t0 = std::chrono::steady_clock::now();
      const std::size_t begin = b * batch, end = std::min(n, begin + batch);
      const std::size_t count = end - begin;
      const Real inv = Real(1) / static_cast<Real>(count);
      std::vector<SampleResult<Real>> results(count);
      std::vector<std::mt19937_64> drop_rngs;
      if (state.model.dropout > 0)
        for (std::size_t i = 0; i < count; ++i) drop_rngs.push_back(substream(cfg.seed, "dropout", step * batch + i));

      auto work = [&](std::size_t i) {
        results[i] = run_sample(state, data[order[begin + i]], cfg, inv, drop_rngs.empty() ? nullptr : &drop_rngs[i]);
      };
      const std::size_t workers = worker_count(cfg, count);
      try {
        if (workers == 1) {
          for (std::size_t i = 0; i < count; ++i) work(i);
        } else {
          std::vector<std::exception_ptr> errors(workers);
          std::vector<std::thread> pool;
          for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
              try {
                for (std::size_t i = w; i < count; i += workers) work(i);
              } catch (...) {
                errors[w] = std::current_exception();
              }
            });
          for (auto& th : pool) th.join();
          for (auto& e : errors)
            if (e) std::rethrow_exception(e);
        }
      } catch (const DivergenceError&) {
        if (!io.out_dir.empty()) save_checkpoint(io.out_dir / "checkpoints" / "last_good", state);
        throw;
      }

      StepReport rep;
      rep.step = ++step;
      rep.epoch = epoch + 1;
      std::size_t correct = 0;
      state.params.zero_grad();
      for (const auto& r : results) {
        state.params.accumulate(r.bound);
        rep.l_v += r.l_v;
        rep.l_con += r.l_con;
        rep.l_spatial += r.l_spatial;
        rep.l_temporal += r.l_temporal;
        rep.l_tracklet += r.l_tracklet;
        rep.l_sema += r.l_sema;
        rep.total += r.total;
        correct += r.correct;
      }
      const double c = static_cast<double>(count);
      rep.l_v /= c;
      rep.l_con /= c;
      rep.l_spatial /= c;
      rep.l_temporal /= c;
      rep.l_tracklet /= c;
      rep.l_sema /= c;
      rep.total /= c;
      rep.acc = static_cast<double>(correct) / c;
      rep.grad_norm = state.params.grad_norm();
      if (!std::isfinite(rep.total) || rep.total > cfg.divergence_limit || !std::isfinite(rep.grad_norm)) {
        if (!io.out_dir.empty()) save_checkpoint(io.out_dir / "checkpoints" / "last_good", state);
        throw DivergenceError("training diverged at step " + std::to_string(rep.step) + ": total loss " +
                              std::to_string(rep.total));
      }

      const double bc1 = 1 - std::pow(cfg.adam_beta1, double(step));
      const double bc2 = 1 - std::pow(cfg.adam_beta2, double(step));
      std::size_t slot = 0;
      for (auto& e : state.params.entries()) {
        const std::size_t idx = slot++;
        if (e.name == "bank.sa") continue;
        auto v = e.value.data();
        auto g = e.grad.data();
        if (cfg.optimizer == Optimizer::gd) {
          for (std::size_t i = 0; i < v.size(); ++i) v[i] -= static_cast<Real>(lr) * g[i];
          continue;
        }
        auto& m1 = moment1[idx];
        auto& m2 = moment2[idx];
        for (std::size_t i = 0; i < v.size(); ++i) {
          const double gi = g[i];
          m1[i] = static_cast<Real>(cfg.adam_beta1 * m1[i] + (1 - cfg.adam_beta1) * gi);
          m2[i] = static_cast<Real>(cfg.adam_beta2 * m2[i] + (1 - cfg.adam_beta2) * gi * gi);
          v[i] -= static_cast<Real>(lr * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + cfg.adam_eps));
        }
      }
      ema_update(state.bank.s, state.params.value("bank.sa"), state.params.grad("bank.sa"), cfg.bank_rate(),
                 state.bank.mu);

      rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (metrics.is_open()) metrics << metrics_row(rep) << '\n';
      if (io.on_step) io.on_step(rep);
      if (!io.quiet && (rep.step % 50 == 0 || rep.step == 1)) {
        std::ostringstream os;
        os << "step " << rep.step << " epoch " << rep.epoch << " total " << rep.total << " acc " << rep.acc;
        log::info(os.str());
      }
      result.steps.push_back(rep);
    }
  }

  result.final_train_accuracy = evaluate(state, data).top1;
  if (!io.out_dir.empty()) save_checkpoint(io.out_dir / "checkpoints" / "final", state);
  return result;
}

template <class Real>
void save_checkpoint(const std::filesystem::path& dir, const ArtState<Real>& state) {
  std::filesystem::create_directories(dir);
  state.params.save(dir);
  io::write_tensor(dir / "bank_s0.artt", state.bank.s0);
  io::write_tensor(dir / "bank_s.artt", state.bank.s);
  nlohmann::ordered_json j;
  j["model"] = model_to_json(state.model);
  j["bank"] = {{"s0", "bank_s0.artt"}, {"s", "bank_s.artt"}, {"mu", state.bank.mu}};
  write_json(dir / "state.json", j);
}

template <class Real>
ArtState<Real> load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "state.json");
  if (!in) throw FormatError("checkpoint state.json missing in " + dir.string());
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
    ArtState<Real> state;
    state.model = model_from_json(j.at("model"));
    state.params = ParamStore<Real>::load(dir);
    const auto& b = j.at("bank");
    state.bank.s0 = io::read_tensor<Real>(dir / b.at("s0").template get<std::string>());
    state.bank.s = io::read_tensor<Real>(dir / b.at("s").template get<std::string>());
    state.bank.mu = b.at("mu");
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint state.json: ") + e.what());
  }
}

#define ART_INSTANTIATE(R)                                                                                   \
  template SampleLoss<R> loss_total(const Bound<R>&, const ModelConfig&, const ArtOutputs<R>&, std::size_t,  \
                                    const TrainConfig&);                                                     \
  template EvalResult evaluate(const ArtState<R>&, const std::vector<SynthSample<R>>&, int);                 \
  template TrainResult<R> train(ArtState<R>&, const std::vector<SynthSample<R>>&, const TrainConfig&,        \
                                const TrainIo&);                                                             \
  template void save_checkpoint(const std::filesystem::path&, const ArtState<R>&);                           \
  template ArtState<R> load_checkpoint<R>(const std::filesystem::path&);

ART_INSTANTIATE(float)
ART_INSTANTIATE(double)
#undef ART_INSTANTIATE

}  // namespace art
