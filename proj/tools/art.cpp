// SPDX-License-Identifier: Apache-2.0
// art: command-line driver for the ART head.
//
//   art synth|train|eval|gradcheck|losses|ablate|inspect
//       --config <file> [--seed N] [--out DIR] [--single-thread]
//
// Exit codes: 0 success, 1 failed check or runtime error, 2 usage or config
// error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "art/config.hpp"
#include "art/dataset_io.hpp"
#include "art/error.hpp"
#include "art/experiment.hpp"
#include "art/gradcheck.hpp"
#include "art/log.hpp"
#include "art/tensor_io.hpp"
#include "loss_oracle.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "art_out";
  bool single_thread = false;
  std::string bank_file;
  bool bank_synthetic = false;
  bool quiet = false;
};

struct DataOptions {
  std::string data;       // dataset directory from `art synth`; empty: generate
  std::string split = "test";
  std::string checkpoint;  // empty: <out>/checkpoints/final
  std::size_t samples = 4;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run config (defaults when omitted)");
  cmd->add_option("--seed", c.seed, "Override the config seed");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_flag("--single-thread", c.single_thread, "Force single-threaded training");
  cmd->add_option("--bank-file", c.bank_file, "Initial semantic bank (ARTT, (N_prom, N_class, C_t))");
  cmd->add_flag("--bank-synthetic", c.bank_synthetic, "Use a synthetic bank even if the config names a file");
  cmd->add_flag("--quiet", c.quiet, "Suppress progress logging");
}

art::RunConfig resolve(const Common& c) {
  art::RunConfig cfg = c.config.empty() ? art::RunConfig::defaults() : art::load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.single_thread) cfg.single_thread = true;
  if (!c.bank_file.empty() && c.bank_synthetic) throw art::ConfigError("--bank-file and --bank-synthetic conflict");
  if (!c.bank_file.empty()) cfg.bank_file = c.bank_file;
  if (c.bank_synthetic) cfg.bank_file.reset();
  cfg.resolve();
  return cfg;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw art::FormatError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

void echo(const Common& c, const art::RunConfig& cfg) {
  fs::create_directories(c.out);
  const json j = art::to_json(cfg);
  write_json(fs::path(c.out) / "config_echo.json", j);
  std::cout << "config " << j.dump() << '\n';
}

// report.json holds one section per command so train and eval can share --out.
void report(const Common& c, const std::string& section, const json& body) {
  const fs::path path = fs::path(c.out) / "report.json";
  json all = json::object();
  if (std::ifstream in(path); in) {
    try {
      all = json::parse(in);
    } catch (const json::exception&) {
      art::log::warn("replacing unreadable " + path.string());
      all = json::object();
    }
  }
  all[section] = body;
  write_json(path, all);
}

template <class Real>
std::vector<art::SynthSample<Real>> load_split(const art::RunConfig& cfg, const DataOptions& d,
                                               const std::string& split) {
  if (!d.data.empty()) return art::read_dataset<Real>(d.data, split);
  if (split == "train") return art::generate<Real>(cfg.synth, cfg.n_train, 0);
  if (split == "test") return art::generate<Real>(cfg.synth, cfg.n_test, cfg.n_train);
  throw art::ConfigError("unknown split '" + split + "' (train or test)");
}

fs::path checkpoint_dir(const Common& c, const DataOptions& d) {
  return d.checkpoint.empty() ? fs::path(c.out) / "checkpoints" / "final" : fs::path(d.checkpoint);
}

template <class Real>
int cmd_synth(const Common& c, const art::RunConfig& cfg) {
  std::vector<art::DatasetSplit<Real>> splits;
  splits.push_back({"train", 0, art::generate<Real>(cfg.synth, cfg.n_train, 0)});
  if (cfg.n_test > 0) splits.push_back({"test", cfg.n_train, art::generate<Real>(cfg.synth, cfg.n_test, cfg.n_train)});
  const fs::path dir = fs::path(c.out) / "data";
  art::write_dataset(dir, splits, art::to_json(cfg).at("synth"));
  json body{{"dir", dir.string()}};
  for (const auto& s : splits) {
    std::vector<std::size_t> counts(cfg.model.n_class, 0);
    for (const auto& x : s.samples) ++counts[x.label];
    body[s.name] = {{"n", s.samples.size()}, {"label_counts", counts}};
  }
  report(c, "synth", body);
  std::cout << "wrote " << dir.string() << '\n';
  return 0;
}

template <class Real>
int cmd_train(const Common& c, const art::RunConfig& cfg, const DataOptions& d) {
  art::ArtState<Real> state = art::make_state<Real>(cfg);
  const auto train_set = load_split<Real>(cfg, d, "train");
  art::TrainIo io{c.out, c.quiet, {}};
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = art::train(state, train_set, cfg.train, io);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json body{{"steps", result.steps.size()},
            {"seconds", secs},
            {"final_train_accuracy", result.final_train_accuracy},
            {"checkpoint", (fs::path(c.out) / "checkpoints" / "final").string()}};
  if (!result.steps.empty()) body["final_total"] = result.steps.back().total;
  if (cfg.n_test > 0 || !d.data.empty()) {
    const auto test = load_split<Real>(cfg, d, "test");
    if (!test.empty()) body["test"] = art::eval_to_json(art::evaluate(state, test));
  }
  report(c, "train", body);
  std::cout << "final_train_accuracy " << result.final_train_accuracy << '\n';
  if (body.contains("test")) std::cout << "test " << body["test"].dump() << '\n';
  return 0;
}

template <class Real>
int cmd_eval(const Common& c, const art::RunConfig& cfg, const DataOptions& d) {
  const art::ArtState<Real> state = art::load_checkpoint<Real>(checkpoint_dir(c, d));
  const auto data = load_split<Real>(cfg, d, d.split);
  json body = art::eval_to_json(art::evaluate(state, data));
  body["split"] = d.split;
  body["checkpoint"] = checkpoint_dir(c, d).string();
  report(c, "eval", body);
  std::cout << body.dump() << '\n';
  return 0;
}

std::string grid_csv(const art::Tensor<double>& row, std::size_t h, std::size_t w) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t col = 0; col < w; ++col) os << row[r * w + col] << (col + 1 == w ? '\n' : ',');
  return os.str();
}

template <class Real>
int cmd_inspect(const Common& c, const art::RunConfig& cfg, const DataOptions& d) {
  const art::ArtState<Real> state = art::load_checkpoint<Real>(checkpoint_dir(c, d));
  if (!state.model.use_rssa) throw art::ConfigError("inspect: checkpoint has no region queries (use_rssa off)");
  const auto data = load_split<Real>(cfg, d, d.split);
  const fs::path root = fs::path(c.out) / "inspect";
  fs::create_directories(root);
  const art::Bound<Real> p = state.params.bind();
  const std::size_t h = state.model.H, w = state.model.W, k = state.model.K;
  json index = json::array();
  for (std::size_t i = 0; i < std::min(d.samples, data.size()); ++i) {
    const auto& s = data[i];
    const auto out = art::art_forward(p, state.model, state.bank.s, s.video);
    const fs::path dir = root / ("sample_" + std::to_string(i));
    fs::create_directories(dir);
    json attn_files = json::array(), tracklet_files = json::array(), saliency = json::array();
    for (std::size_t t = 0; t < out.attn.size(); ++t)
      for (std::size_t q = 0; q < k; ++q) {
        art::Tensor<double> row({h * w});
        for (std::size_t j = 0; j < h * w; ++j) row[j] = out.attn[t](q, j);
        const std::string name = "attn_t" + std::to_string(t) + "_q" + std::to_string(q) + ".csv";
        std::ofstream(dir / name) << grid_csv(row, h, w);
        attn_files.push_back((fs::path(dir.filename()) / name).string());
      }
    for (std::size_t q = 0; q < out.tracklets.size(); ++q) {
      const std::string name = "tracklet_q" + std::to_string(q) + ".artt";
      art::io::write_tensor(dir / name, out.tracklets[q].value());
      tracklet_files.push_back((fs::path(dir.filename()) / name).string());
      const auto wts = art::temporal_saliency(out.tracklets[q], out.s_topk).value();
      saliency.push_back(std::vector<double>(wts.data().begin(), wts.data().end()));
    }
    const auto& lc = out.logits_con.value();
    const auto pred = static_cast<std::size_t>(std::max_element(lc.data().begin(), lc.data().end()) - lc.data().begin());
    index.push_back({{"sample", i},
                     {"split", d.split},
                     {"label", s.label},
                     {"prediction", pred},
                     {"topk", out.topk},
                     {"truth", s.truth},
                     {"hit_rate", art::tracking_hit_rate(out.attn, s.truth, w, 1)},
                     {"saliency", saliency},
                     {"attention", attn_files},
                     {"tracklets", tracklet_files}});
  }
  write_json(root / "index.json", index);
  report(c, "inspect", {{"dir", root.string()}, {"samples", index.size()}});
  std::cout << "wrote " << index.size() << " samples under " << root.string() << '\n';
  return 0;
}

int cmd_gradcheck(const Common& c, const art::RunConfig& cfg, const std::string& corrupt_op, double factor) {
  if (cfg.precision != art::Precision::f64) {
    std::cerr << "gradcheck refused: finite-difference checks require precision f64\n";
    return 2;
  }
  art::GradcheckOptions opts;
  opts.seed = cfg.seed;
  if (!corrupt_op.empty()) opts.corruption = art::GradientCorruption{corrupt_op, factor};
  const art::GradcheckReport rep = art::run_gradcheck_suite(opts);
  json cases = json::array();
  for (const auto& k : rep.cases) {
    std::printf("%-34s %.3e %8zu %s\n", k.op.c_str(), k.max_rel_error, k.entries, k.passed ? "ok" : "FAIL");
    cases.push_back({{"op", k.op}, {"max_rel_error", k.max_rel_error}, {"entries", k.entries}, {"passed", k.passed}});
  }
  report(c, "gradcheck", {{"tolerance", opts.tolerance}, {"h", opts.h}, {"passed", rep.passed()}, {"cases", cases}});
  if (rep.passed()) {
    std::cout << "gradcheck passed: " << rep.cases.size() << " cases\n";
    return 0;
  }
  std::cout << "gradcheck FAILED:";
  for (const auto& f : rep.failures()) std::cout << ' ' << f;
  std::cout << '\n';
  return 1;
}

int cmd_losses(const Common& c, const art::RunConfig& cfg, std::size_t instances, double tolerance) {
  const auto res = art::oracle::run_loss_suite(cfg.seed, instances);
  json rows = json::array();
  bool ok = true;
  for (const auto& l : res.losses) {
    const bool pass = l.max_abs <= tolerance;
    ok = ok && pass;
    std::printf("%-28s max_abs %.3e over %zu %s\n", l.loss.c_str(), l.max_abs, l.instances, pass ? "ok" : "FAIL");
    rows.push_back({{"loss", l.loss}, {"max_abs", l.max_abs}, {"instances", l.instances}, {"passed", pass}});
  }
  report(c, "losses", {{"instances", instances}, {"tolerance", tolerance}, {"passed", ok}, {"losses", rows}});
  std::cout << (ok ? "losses passed" : "losses FAILED") << ", worst " << res.worst() << '\n';
  return ok ? 0 : 1;
}

int cmd_ablate(const Common& c, const art::RunConfig& cfg) {
  const auto rows = art::run_ablation(cfg);
  const json grid = art::ablation_to_json(rows);
  write_json(fs::path(c.out) / "ablation.json", grid);
  std::ofstream(fs::path(c.out) / "ablation.csv") << art::ablation_to_csv(rows);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += !r.outcome;
  report(c, "ablate", {{"cells", rows.size()}, {"failed", failed}, {"grid", grid}});
  std::cout << art::ablation_to_csv(rows);
  if (failed) std::cout << failed << " cell(s) failed; see ablation.json\n";
  return 0;
}

template <template <class> class Fn, class... Args>
int dispatch(const art::RunConfig& cfg, Args&&... args) {
  return cfg.precision == art::Precision::f32 ? Fn<float>::run(std::forward<Args>(args)...)
                                              : Fn<double>::run(std::forward<Args>(args)...);
}

template <class R>
struct Synth {
  static int run(const Common& c, const art::RunConfig& cfg) { return cmd_synth<R>(c, cfg); }
};
template <class R>
struct Train {
  static int run(const Common& c, const art::RunConfig& cfg, const DataOptions& d) { return cmd_train<R>(c, cfg, d); }
};
template <class R>
struct Eval {
  static int run(const Common& c, const art::RunConfig& cfg, const DataOptions& d) { return cmd_eval<R>(c, cfg, d); }
};
template <class R>
struct Inspect {
  static int run(const Common& c, const art::RunConfig& cfg, const DataOptions& d) {
    return cmd_inspect<R>(c, cfg, d);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ART head: synthetic training, checks and ablations"};
  app.require_subcommand(1);
  Common common;
  DataOptions data;
  std::string corrupt_op;
  double corrupt_factor = 2.0;
  std::size_t instances = 1000;
  double loss_tolerance = 1e-10;

  auto* synth = app.add_subcommand("synth", "Write the synthetic train/test splits under <out>/data");
  auto* train = app.add_subcommand("train", "Train, checkpoint and report held-out accuracy");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks (f64)");
  auto* losses = app.add_subcommand("losses", "Compare every loss with its brute-force oracle");
  auto* ablate = app.add_subcommand("ablate", "Component ablation grid with K and lambda sweeps");
  auto* inspect = app.add_subcommand("inspect", "Export attention grids and tracklets for a few samples");
  for (auto* cmd : {synth, train, eval, gradcheck, losses, ablate, inspect}) add_common(cmd, common);
  for (auto* cmd : {train, eval, inspect}) cmd->add_option("--data", data.data, "Dataset directory from `art synth`");
  for (auto* cmd : {eval, inspect}) {
    cmd->add_option("--checkpoint", data.checkpoint, "Checkpoint directory (default <out>/checkpoints/final)");
    cmd->add_option("--split", data.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  }
  inspect->add_option("--samples", data.samples, "Number of samples to export");
  gradcheck->add_option("--corrupt-op", corrupt_op, "Test hook: scale this op's incoming gradient");
  gradcheck->add_option("--corrupt-factor", corrupt_factor, "Scale used by --corrupt-op");
  losses->add_option("--instances", instances, "Random instances per loss");
  losses->add_option("--tolerance", loss_tolerance, "Maximum absolute deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    art::log::set_quiet(common.quiet);
    const art::RunConfig cfg = resolve(common);
    echo(common, cfg);
    if (synth->parsed()) return dispatch<Synth>(cfg, common, cfg);
    if (train->parsed()) return dispatch<Train>(cfg, common, cfg, data);
    if (eval->parsed()) return dispatch<Eval>(cfg, common, cfg, data);
    if (inspect->parsed()) return dispatch<Inspect>(cfg, common, cfg, data);
    if (gradcheck->parsed()) return cmd_gradcheck(common, cfg, corrupt_op, corrupt_factor);
    if (losses->parsed()) return cmd_losses(common, cfg, instances, loss_tolerance);
    if (ablate->parsed()) return cmd_ablate(common, cfg);
  } catch (const art::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
