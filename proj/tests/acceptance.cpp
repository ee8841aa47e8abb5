// SPDX-License-Identifier: Apache-2.0
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits 1 if
// any criterion fails. Training artifacts are kept under ./acceptance_out.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "art/config.hpp"
#include "art/experiment.hpp"
#include "art/gradcheck.hpp"
#include "art/log.hpp"
#include "art/model.hpp"
#include "art/ops.hpp"
#include "art/semantic_bank.hpp"
#include "loss_oracle.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace art;
using namespace art::test;

namespace {

// Criterion 1
constexpr std::uint64_t kOracleSeed = 20240601;
constexpr std::size_t kOracleInstances = 1000;
constexpr double kOracleTol = 1e-10;
constexpr double kOracleSeconds = 60;
// Criterion 2
constexpr double kGradSeconds = 300;
// Criterion 4
constexpr double kSpatialPermTol = 1e-6;
constexpr double kInvarianceTol = 1e-9;
// Criteria 5-9
constexpr std::uint64_t kTrackSeed = 7;
constexpr std::size_t kMaxSteps = 2000;
constexpr double kHitFloor = 0.8;
constexpr int kHitRadius = 1;
constexpr double kTrackSeconds = 600;
constexpr double kAdjacentLo = 0.45, kAdjacentHi = 1.0;
constexpr double kLossWeight = 5.0;
constexpr double kBookkeepingTol = 1e-6;
constexpr std::size_t kAblationSeeds = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string str_printf(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Verdicts {
  std::map<int, bool> pass;
  std::map<int, std::string> lines;

  void report(int id, bool ok, const std::string& name, const std::string& detail) {
    pass[id] = ok;
    lines[id] = str_printf("criterion %d %s  %s: %s", id, ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::printf("%s\n", lines[id].c_str());
    std::fflush(stdout);
  }
};

void note(const std::string& s) {
  std::printf("  %s\n", s.c_str());
  std::fflush(stdout);
}

// ---------------------------------------------------------------- criterion 1

void oracle_equivalence(Verdicts& v) {
  const auto t0 = Clock::now();
  const auto res = oracle::run_loss_suite(kOracleSeed, kOracleInstances);
  const double secs = seconds_since(t0);
  bool ok = secs < kOracleSeconds && !res.losses.empty();
  std::size_t fewest = kOracleInstances;
  for (const auto& l : res.losses) {
    note(str_printf("%-28s max_abs %.3e over %zu", l.loss.c_str(), l.max_abs, l.instances));
    ok = ok && l.max_abs <= kOracleTol && l.instances >= kOracleInstances;
    fewest = std::min(fewest, l.instances);
  }
  v.report(1, ok, "oracle equivalence",
           str_printf("%zu losses, worst %.3e (tol %.0e), min instances %zu, %.1f s (limit %.0f s)", res.losses.size(),
               res.worst(), kOracleTol, fewest, secs, kOracleSeconds));
}

// ---------------------------------------------------------------- criterion 2

void gradient_checks(Verdicts& v) {
  const auto t0 = Clock::now();
  GradcheckOptions opts;
  const auto rep = run_gradcheck_suite(opts);
  const double secs = seconds_since(t0);
  double worst = 0;
  for (const auto& c : rep.cases) worst = std::max(worst, c.max_rel_error);
  std::string failed;
  for (const auto& f : rep.failures()) failed += " " + f;
  v.report(2, rep.passed() && secs < kGradSeconds, "gradient checks",
           str_printf("%zu cases, worst rel %.3e (tol %.0e, h %.0e), %.1f s (limit %.0f s)%s", rep.cases.size(), worst,
               opts.tolerance, opts.h, secs, kGradSeconds, failed.empty() ? "" : (" failed:" + failed).c_str()));
}

// ---------------------------------------------------------------- criterion 3

bool ema_exact(Gen& g) {
  for (int trial = 0; trial < 100; ++trial) {
    const Shape shape{g.pick(1, 3), g.pick(1, 4), g.pick(1, 6)};
    const auto s = g.tensor(shape), sa = g.tensor(shape), grad = g.tensor(shape);
    const double eta = g.uniform(0, 0.5);

    Tensor<double> s1 = s, sa1 = sa;
    ema_update(s1, sa1, grad, eta, 1.0);
    if (!bit_equal(s1, s)) return false;

    Tensor<double> s0 = s, sa0 = sa;
    ema_update(s0, sa0, grad, eta, 0.0);
    if (!bit_equal(s0, sa0)) return false;
  }
  return true;
}

bool initial_bank_frozen(std::size_t& steps) {
  RunConfig c = RunConfig::defaults();
  c.seed = 3;
  c.model.T = 3;
  c.model.H = c.model.W = 4;
  c.model.C = 8;
  c.model.d = 8;
  c.model.heads = 2;
  c.model.depth = 1;
  c.model.c_text = 8;
  c.n_train = 12;
  c.train.batch = 12;
  c.train.epochs = 100;
  c.resolve();
  auto state = make_state<double>(c);
  const auto s0 = state.bank.s0;
  const auto res = train(state, generate<double>(c.synth, c.n_train), c.train);
  steps = res.steps.size();
  return steps == 100 && bit_equal(state.bank.s0, s0);
}

// Cosine of x against proj^T e for one text embedding e.
double projected_cosine(const Tensor<double>& x, const double* e, const Tensor<double>& proj) {
  const std::size_t ct = proj.dim(0), c = proj.dim(1);
  double dot = 0, nx = 0, ne = 0;
  for (std::size_t j = 0; j < c; ++j) {
    double p = 0;
    for (std::size_t i = 0; i < ct; ++i) p += e[i] * proj(i, j);
    dot += x[j] * p;
    nx += x[j] * x[j];
    ne += p * p;
  }
  return dot / std::sqrt(nx * ne);
}

bool dominated_prompts_ignored(Gen& g) {
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t np = g.pick(1, 3), nc = g.pick(2, 4), ct = g.pick(2, 6), c = g.pick(2, 6);
    const auto sa = g.tensor({np, nc, ct}), proj = g.tensor({ct, c}), x = g.tensor({c});
    std::vector<double> best(nc, -2.0);
    for (std::size_t i = 0; i < np; ++i)
      for (std::size_t j = 0; j < nc; ++j)
        best[j] = std::max(best[j], projected_cosine(x, sa.ptr() + (i * nc + j) * ct, proj));

    Tensor<double> grown({np + 1, nc, ct});
    std::copy(sa.data().begin(), sa.data().end(), grown.ptr());
    for (std::size_t j = 0; j < nc; ++j) {
      double* e = grown.ptr() + (np * nc + j) * ct;
      do {
        for (std::size_t i = 0; i < ct; ++i) e[i] = g.normal();
      } while (projected_cosine(x, e, proj) >= best[j]);
    }
    if (!bit_equal(winner_take_all_scores(cst(x), cst(sa), cst(proj)).value(),
                   winner_take_all_scores(cst(x), cst(grown), cst(proj)).value()))
      return false;
  }
  return true;
}

bool tracklets_biject(Gen& g) {
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = g.pick(1, 6), k = g.pick(1, 4), c = g.pick(1, 6);
    std::vector<Var<double>> resp;
    for (std::size_t f = 0; f < t; ++f) resp.push_back(cst(g.tensor({k, c})));
    std::vector<Tensor<double>> tracklets;
    for (const auto& v : form_tracklets(resp)) tracklets.push_back(v.value());
    if (tracklets.size() != k) return false;
    for (std::size_t q = 0; q < k; ++q)
      for (std::size_t f = 0; f < t; ++f)
        for (std::size_t j = 0; j < c; ++j)
          if (tracklets[q](f, j) != resp[f].value()(q, j)) return false;
    const auto back = unform_tracklets(tracklets);
    if (back.size() != t) return false;
    for (std::size_t f = 0; f < t; ++f)
      if (!bit_equal(back[f], resp[f].value())) return false;
  }
  return true;
}

void exact_algebra(Verdicts& v) {
  Gen g(31);
  const bool ema = ema_exact(g);
  std::size_t steps = 0;
  const bool frozen = initial_bank_frozen(steps);
  const bool wta = dominated_prompts_ignored(g);
  const bool bij = tracklets_biject(g);
  v.report(3, ema && frozen && wta && bij, "exact algebra",
           str_printf("ema mu=1/mu=0 %s, S0 frozen over %zu steps %s, dominated prompts %s, tracklet bijection %s",
               ema ? "ok" : "FAIL", steps, frozen ? "ok" : "FAIL", wta ? "ok" : "FAIL", bij ? "ok" : "FAIL"));
}

// ---------------------------------------------------------------- criterion 4

Tensor<double> permute_cells(const Tensor<double>& x, const std::vector<std::size_t>& perm) {
  const std::size_t t = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  Tensor<double> out(x.dims());
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t i = 0; i < hw; ++i)
      std::copy_n(x.ptr() + (f * hw + perm[i]) * c, c, out.ptr() + (f * hw + i) * c);
  return out;
}

double spatial_permutation_gap(Gen& g) {
  ModelConfig c;
  c.T = 4;
  c.H = c.W = 4;
  c.C = 16;
  c.K = 2;
  c.d = 16;
  c.heads = 2;
  c.depth = 2;
  c.n_class = 4;
  c.n_prom = 2;
  c.c_text = 16;
  c.pos_emb = false;
  const auto bank = generate_synthetic_bank<double>({c.n_prom, c.n_class, c.c_text, 0.3}, 5);
  const auto params = init_model_params(c, bank, 5);
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = g.tensor({c.T, c.H, c.W, c.C});
    const auto a = art_forward(params.bind(), c, bank, FeatureVolume<double>{x});
    const auto b = art_forward(params.bind(), c, bank, FeatureVolume<double>{permute_cells(x, g.permutation(16))});
    for (std::size_t t = 0; t < c.T; ++t)
      worst = std::max(worst, max_abs_diff(a.responses[t].value(), b.responses[t].value()));
  }
  return worst;
}

double query_permutation_gap(Gen& g) {
  double worst = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t t = g.pick(1, 4), k = g.pick(1, 3), c = g.pick(1, 8);
    const auto perm = g.permutation(k);
    std::vector<Var<double>> r, p;
    for (std::size_t f = 0; f < t; ++f) {
      const auto frame = g.tensor({k, c});
      r.push_back(cst(frame));
      p.push_back(cst(permute_rows(frame, perm)));
    }
    const MtcConfig cfg{g.uniform(-1, 1), trial % 2 ? TemporalMode::hinge : TemporalMode::literal};
    const auto a = mtc_total(r, form_tracklets(r), cfg), b = mtc_total(p, form_tracklets(p), cfg);
    for (const auto& [x, y] : {std::pair{a.spatial, b.spatial}, std::pair{a.temporal, b.temporal},
                               std::pair{a.tracklet, b.tracklet}, std::pair{a.total, b.total}})
      worst = std::max(worst, std::abs(x.item() - y.item()));
  }
  return worst;
}

double saliency_shift_gap(Gen& g) {
  double worst = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t t = g.pick(1, 6), k = g.pick(1, 3), c = g.pick(1, 8);
    const auto tr = g.tensor({t, c}), s = g.tensor({k, c}), u = g.tensor({c}, 3.0);
    // A common offset u on every frame shifts each semantic's scores uniformly in t.
    Tensor<double> shifted = tr;
    for (std::size_t f = 0; f < t; ++f)
      for (std::size_t j = 0; j < c; ++j) shifted(f, j) += u[j];
    worst = std::max(worst, max_abs_diff(temporal_saliency(cst(tr), cst(s)).value(),
                                         temporal_saliency(cst(shifted), cst(s)).value()));
  }
  return worst;
}

double cosine_scale_gap(Gen& g) {
  double worst = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = g.pick(1, 16);
    const auto a = g.tensor({n}), b = g.tensor({n});
    Tensor<double> sa = a, sb = b;
    const double alpha = std::exp(g.uniform(-5, 5)), beta = std::exp(g.uniform(-5, 5));
    for (auto& e : sa.data()) e *= alpha;
    for (auto& e : sb.data()) e *= beta;
    worst = std::max(worst, std::abs(cosine(cst(a), cst(b)).item() - cosine(cst(sa), cst(sb)).item()));
  }
  return worst;
}

void invariances(Verdicts& v) {
  Gen g(41);
  const double sp = spatial_permutation_gap(g), qp = query_permutation_gap(g), sh = saliency_shift_gap(g),
               cs = cosine_scale_gap(g);
  const bool ok = sp <= kSpatialPermTol && qp <= kInvarianceTol && sh <= kInvarianceTol && cs <= kInvarianceTol;
  v.report(4, ok, "structural invariances",
           str_printf("spatial perm %.2e (tol %.0e), query perm %.2e, saliency shift %.2e, cosine scale %.2e (tol %.0e)", sp,
               kSpatialPermTol, qp, sh, cs, kInvarianceTol));
}

// ---------------------------------------------------------------- criteria 5-9

// Planted-trajectory task at the acceptance dimensions, full ART, default loss
// weights and hinge temporal term at lambda 0.6.
RunConfig tracking_config(std::uint64_t seed) {
  RunConfig c = RunConfig::defaults();
  c.seed = seed;
  c.model.T = 8;
  c.model.H = c.model.W = 8;
  c.model.C = 16;
  c.model.K = 2;
  c.model.n_class = 4;
  c.model.d = 16;
  c.model.heads = 2;
  c.model.depth = 1;
  c.synth.n_parts = 2;
  c.synth.signature_strength = 2.0;
  c.synth.noise_sigma = 0.1;
  c.n_train = 512;
  c.n_test = 256;
  c.train.gamma1 = kLossWeight;
  c.train.gamma2 = kLossWeight;
  c.train.mtc = {0.6, TemporalMode::hinge};
  c.train.optimizer = Optimizer::adam;
  c.train.lr = 0.01;
  c.train.batch = 16;
  c.train.max_steps = kMaxSteps;
  c.train.epochs = (kMaxSteps * c.train.batch + c.n_train - 1) / c.n_train;
  c.train.decay_every = c.train.epochs + 1;
  c.single_thread = true;
  return apply_setting(c, AblationSetting::full);
}

struct Run {
  std::string name;
  RunConfig cfg;
  RunOutcome out;
  fs::path dir;
};

const fs::path kOutRoot = "acceptance_out";

Run run(const std::string& name, const RunConfig& cfg) {
  Run r{name, cfg, {}, kOutRoot / name};
  fs::remove_all(r.dir);
  r.out = run_experiment<double>(cfg, TrainIo{r.dir, true, {}});
  const auto& t = r.out.test;
  note(str_printf("run %-14s steps %4zu  train acc %.3f  test top1 %.3f  hit %.3f  m %.4f  %.1f s", name.c_str(),
           r.out.steps.size(), r.out.final_train_accuracy, t.top1, t.hit_rate.value_or(NAN),
           t.adjacent_cos.value_or(NAN), r.out.seconds));
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void training_criteria(Verdicts& v) {
  const RunConfig full = tracking_config(kTrackSeed);
  RunConfig no_mtc = apply_setting(full, AblationSetting::ta);
  RunConfig literal = full;
  literal.train.mtc.temporal_mode = TemporalMode::literal;
  literal.resolve();

  const Run a = run("full_hinge", full);
  const Run b = run("gamma1_zero", no_mtc);

  // 5: tracking
  {
    const double hit = a.out.test.hit_rate.value_or(0), hit0 = b.out.test.hit_rate.value_or(0);
    const double secs = a.out.seconds + b.out.seconds;
    const bool steps_ok = a.out.steps.size() <= kMaxSteps && b.out.steps.size() <= kMaxSteps;
    v.report(5, hit >= kHitFloor && hit >= hit0 && secs < kTrackSeconds && steps_ok, "synthetic tracking",
             str_printf("hit_rate(r=%d) %.4f (floor %.2f), with gamma1=0 %.4f, %zu steps, %.1f s for both runs (limit %.0f s)",
                 kHitRadius, hit, kHitFloor, hit0, a.out.steps.size(), secs, kTrackSeconds));
  }

  // 7: temporal attraction
  const Run l = run("full_literal", literal);
  {
    const double m = a.out.test.adjacent_cos.value_or(NAN), ml = l.out.test.adjacent_cos.value_or(NAN);
    v.report(7, m >= kAdjacentLo && m <= kAdjacentHi && ml < m, "temporal attraction",
             str_printf("hinge m %.6f (range [%.2f, %.2f]), literal m %.6f", m, kAdjacentLo, kAdjacentHi, ml));
  }

  // 8: determinism
  const Run a2 = run("full_hinge_rep", full);
  {
    const std::string c1 = slurp(a.dir / "metrics.csv"), c2 = slurp(a2.dir / "metrics.csv");
    v.report(8, !c1.empty() && c1 == c2, "determinism",
             str_printf("metrics.csv %zu bytes vs %zu bytes, %s", c1.size(), c2.size(), c1 == c2 ? "identical" : "differ"));
  }

  // 6: ablation over seeds
  std::vector<Run> extra;
  std::map<AblationSetting, std::vector<double>> top1;
  for (std::size_t i = 0; i < kAblationSeeds; ++i) {
    const RunConfig seeded = tracking_config(kTrackSeed + i);
    for (const AblationSetting s : {AblationSetting::baseline, AblationSetting::ta, AblationSetting::full}) {
      const RunConfig cfg = apply_setting(seeded, s);
      const std::string name = setting_name(s);
      const Run* reuse = nullptr;
      for (const Run* r : {&a, &b})
        if (to_json(r->cfg) == to_json(cfg)) reuse = r;
      if (reuse) {
        top1[s].push_back(reuse->out.test.top1);
      } else {
        extra.push_back(run(name + "_s" + std::to_string(cfg.seed), cfg));
        top1[s].push_back(extra.back().out.test.top1);
      }
    }
  }
  {
    auto mean = [](const std::vector<double>& x) {
      double s = 0;
      for (double e : x) s += e;
      return s / double(x.size());
    };
    const double base = mean(top1[AblationSetting::baseline]), ta = mean(top1[AblationSetting::ta]),
                 art = mean(top1[AblationSetting::full]);
    bool complete = true;
    for (const auto& [s, x] : top1) complete = complete && x.size() == kAblationSeeds;
    v.report(6, complete && top1.size() == 3 && art >= ta && ta >= base && base < 1.0, "classification ablation",
             str_printf("mean top1 over %zu seeds: full %.4f, +rssa+ta %.4f, baseline %.4f", kAblationSeeds, art, ta, base));
  }

  // 9: bookkeeping on every run trained with the default weights
  {
    std::size_t checked = 0, bad = 0;
    double worst = 0;
    auto check = [&](const Run& r) {
      if (r.cfg.train.gamma1 != kLossWeight || r.cfg.train.gamma2 != kLossWeight) return;
      for (const auto& s : r.out.steps) {
        const double want = s.l_v + s.l_con + kLossWeight * s.l_mtc() + kLossWeight * s.l_sema;
        const double gap = std::abs(s.total - want);
        worst = std::max(worst, gap);
        bad += !(gap <= kBookkeepingTol);
        ++checked;
      }
    };
    for (const Run* r : {&a, &b, &l, &a2}) check(*r);
    for (const Run& r : extra) check(r);
    v.report(9, checked > 0 && bad == 0, "loss bookkeeping",
             str_printf("%zu logged steps, worst |total - sum| %.3e (tol %.0e)", checked, worst, kBookkeepingTol));
  }
}

}  // namespace

int main(int argc, char** argv) {
  // --quick skips the training criteria (5-9).
  const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
  art::log::set_quiet(true);
  Verdicts v;
  try {
    oracle_equivalence(v);
    gradient_checks(v);
    exact_algebra(v);
    invariances(v);
    if (!quick) training_criteria(v);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("\nsummary\n");
  for (const auto& [id, line] : v.lines) std::printf("%s\n", line.c_str());
  std::size_t failed = 0;
  for (const auto& [id, ok] : v.pass) failed += !ok;
  std::printf("%zu/%zu criteria passed\n", v.pass.size() - failed, v.pass.size());
  return failed ? 1 : 0;
}
