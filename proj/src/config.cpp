// SPDX-License-Identifier: Apache-2.0
#include "art/config.hpp"

#include <fstream>
#include <set>
#include <thread>

namespace art {

using json = nlohmann::ordered_json;

namespace {

// Reads the keys of one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  void get(const char* key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, std::uint64_t& out, int) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key, "an integer");
      out = v->get<int>();
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "a boolean");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::optional<double>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      if (!v->is_number()) fail(key, "a number or null");
      out = v->get<double>();
    }
  }
  void get(const char* key, std::optional<std::string>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      if (!v->is_string()) fail(key, "a string or null");
      out = v->get<std::string>();
    }
  }
  template <class Enum>
  void get_enum(const char* key, Enum& out, std::initializer_list<std::pair<const char*, Enum>> names) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "a string");
      const std::string s = v->get<std::string>();
      for (const auto& [n, e] : names)
        if (s == n) {
          out = e;
          return;
        }
      std::string allowed;
      for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : "|") + std::string(n);
      throw ConfigError("config key '" + path(key) + "' must be one of " + allowed + ", got '" + s + "'");
    }
  }
  const json* section(const char* key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!known_.count(k)) throw ConfigError("unknown config key '" + path(k) + "'");
  }

 private:
  const json* find(const char* key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError("config key '" + path(key) + "' must be " + what);
  }

  const json& j_;
  std::string name_;
  std::set<std::string> known_;
};

constexpr std::initializer_list<std::pair<const char*, AggregationMode>> kAggregation = {
    {"literal", AggregationMode::literal}, {"normalized", AggregationMode::normalized}, {"sum", AggregationMode::sum}};
constexpr std::initializer_list<std::pair<const char*, TemporalMode>> kTemporal = {
    {"hinge", TemporalMode::hinge}, {"literal", TemporalMode::literal}};
constexpr std::initializer_list<std::pair<const char*, Precision>> kPrecision = {{"f32", Precision::f32},
                                                                                 {"f64", Precision::f64}};
constexpr std::initializer_list<std::pair<const char*, Optimizer>> kOptimizer = {{"gd", Optimizer::gd},
                                                                                  {"adam", Optimizer::adam}};
constexpr std::initializer_list<std::pair<const char*, PrototypeReduction>> kReduction = {
    {"mean", PrototypeReduction::mean}, {"sum", PrototypeReduction::sum}};

}  // namespace

std::string to_string(AggregationMode m) {
  switch (m) {
    case AggregationMode::literal: return "literal";
    case AggregationMode::normalized: return "normalized";
    case AggregationMode::sum: return "sum";
  }
  return "?";
}

std::string to_string(TemporalMode m) { return m == TemporalMode::hinge ? "hinge" : "literal"; }
std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.model.T = 8;
  c.model.H = 8;
  c.model.W = 8;
  c.model.C = 16;
  c.model.K = 2;
  c.model.d = 32;
  c.model.heads = 4;
  c.model.depth = 4;
  c.model.n_class = 4;
  c.model.n_prom = 2;
  c.model.c_text = 32;
  c.train.batch = 8;
  c.train.epochs = 20;
  c.train.decay_every = 10;
  return c;
}

void RunConfig::resolve() {
  synth.T = model.T;
  synth.H = model.H;
  synth.W = model.W;
  synth.C = model.C;
  synth.n_classes = model.n_class;
  synth.seed = seed;
  train.seed = seed;
  if (single_thread) train.threads = 1;
  if (n_train == 0) throw ConfigError("synth.n_train must be >= 1");
  model.validate();
  synth.validate();
  train.validate();
  if (bank_jitter < 0) throw ConfigError("bank.jitter must be >= 0");
}

BankSpec RunConfig::bank_spec() const { return {model.n_prom, model.n_class, model.c_text, bank_jitter}; }

RunConfig parse_run_config(const json& j) {
  RunConfig c = RunConfig::defaults();
  Section top(j, "");
  top.get("seed", c.seed, 0);
  top.get_enum("precision", c.precision, kPrecision);
  if (const json* s = top.section("model")) {
    Section m(*s, "model");
    m.get("T", c.model.T);
    m.get("H", c.model.H);
    m.get("W", c.model.W);
    m.get("C", c.model.C);
    m.get("K", c.model.K);
    m.get("d", c.model.d);
    m.get("heads", c.model.heads);
    m.get("depth", c.model.depth);
    m.get("ffn_mult", c.model.ffn_mult);
    m.get("dropout", c.model.dropout);
    m.finish();
  }
  if (const json* s = top.section("bank")) {
    Section b(*s, "bank");
    b.get("n_prom", c.model.n_prom);
    b.get("n_class", c.model.n_class);
    b.get("c_text", c.model.c_text);
    b.get("mu", c.train.mu);
    b.get("eta", c.train.eta);
    b.get("jitter", c.bank_jitter);
    b.get("file", c.bank_file);
    b.finish();
  }
  if (const json* s = top.section("mtc")) {
    Section m(*s, "mtc");
    m.get("lambda", c.train.mtc.lambda);
    m.get_enum("temporal_mode", c.train.mtc.temporal_mode, kTemporal);
    m.finish();
  }
  if (const json* s = top.section("synth")) {
    Section d(*s, "synth");
    d.get("n_parts", c.synth.n_parts);
    d.get("signature_strength", c.synth.signature_strength);
    d.get("noise_sigma", c.synth.noise_sigma);
    d.get("speed", c.synth.speed);
    d.get("start_jitter", c.synth.start_jitter);
    d.get("n_train", c.n_train);
    d.get("n_test", c.n_test);
    d.finish();
  }
  if (const json* s = top.section("train")) {
    Section t(*s, "train");
    t.get("gamma1", c.train.gamma1);
    t.get("gamma2", c.train.gamma2);
    t.get("lr", c.train.lr);
    t.get("epochs", c.train.epochs);
    t.get("decay_every", c.train.decay_every);
    t.get("decay", c.train.decay);
    t.get("batch", c.train.batch);
    t.get("max_steps", c.train.max_steps);
    t.get_enum("prototype_reduction", c.train.prototype_reduction, kReduction);
    t.get("threads", c.train.threads);
    t.get("divergence_limit", c.train.divergence_limit);
    t.get_enum("optimizer", c.train.optimizer, kOptimizer);
    t.get("adam_beta1", c.train.adam_beta1);
    t.get("adam_beta2", c.train.adam_beta2);
    t.get("adam_eps", c.train.adam_eps);
    t.finish();
  }
  if (const json* s = top.section("flags")) {
    Section f(*s, "flags");
    f.get("pos_emb", c.model.pos_emb);
    f.get("use_sse", c.model.use_sse);
    f.get("use_rssa", c.model.use_rssa);
    f.get_enum("aggregation", c.model.aggregation, kAggregation);
    f.get("single_thread", c.single_thread);
    f.finish();
  }
  top.finish();
  c.resolve();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["precision"] = to_string(c.precision);
  j["model"] = {{"T", c.model.T},         {"H", c.model.H},         {"W", c.model.W},
                {"C", c.model.C},         {"K", c.model.K},         {"d", c.model.d},
                {"heads", c.model.heads}, {"depth", c.model.depth}, {"ffn_mult", c.model.ffn_mult},
                {"dropout", c.model.dropout}};
  j["bank"] = {{"n_prom", c.model.n_prom},
               {"n_class", c.model.n_class},
               {"c_text", c.model.c_text},
               {"mu", c.train.mu},
               {"eta", c.train.eta ? json(*c.train.eta) : json(nullptr)},
               {"jitter", c.bank_jitter},
               {"file", c.bank_file ? json(*c.bank_file) : json(nullptr)}};
  j["mtc"] = {{"lambda", c.train.mtc.lambda}, {"temporal_mode", to_string(c.train.mtc.temporal_mode)}};
  j["synth"] = {{"n_parts", c.synth.n_parts},
                {"signature_strength", c.synth.signature_strength},
                {"noise_sigma", c.synth.noise_sigma},
                {"speed", c.synth.speed},
                {"start_jitter", c.synth.start_jitter},
                {"n_train", c.n_train},
                {"n_test", c.n_test}};
  j["train"] = {{"gamma1", c.train.gamma1},
                {"gamma2", c.train.gamma2},
                {"lr", c.train.lr},
                {"epochs", c.train.epochs},
                {"decay_every", c.train.decay_every},
                {"decay", c.train.decay},
                {"batch", c.train.batch},
                {"max_steps", c.train.max_steps},
                {"prototype_reduction", c.train.prototype_reduction == PrototypeReduction::mean ? "mean" : "sum"},
                {"threads", c.train.threads},
                {"divergence_limit", c.train.divergence_limit},
                {"optimizer", c.train.optimizer == Optimizer::adam ? "adam" : "gd"},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps}};
  j["flags"] = {{"pos_emb", c.model.pos_emb},
                {"use_sse", c.model.use_sse},
                {"use_rssa", c.model.use_rssa},
                {"aggregation", to_string(c.model.aggregation)},
                {"single_thread", c.single_thread}};
  return j;
}

json model_to_json(const ModelConfig& m) {
  return {{"T", m.T},
          {"H", m.H},
          {"W", m.W},
          {"C", m.C},
          {"K", m.K},
          {"d", m.d},
          {"heads", m.heads},
          {"depth", m.depth},
          {"ffn_mult", m.ffn_mult},
          {"n_class", m.n_class},
          {"n_prom", m.n_prom},
          {"c_text", m.c_text},
          {"pos_emb", m.pos_emb},
          {"use_sse", m.use_sse},
          {"use_rssa", m.use_rssa},
          {"aggregation", to_string(m.aggregation)},
          {"dropout", m.dropout}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  Section s(j, "model");
  for (auto [key, field] : {std::pair{"T", &m.T}, {"H", &m.H}, {"W", &m.W}, {"C", &m.C}, {"K", &m.K}, {"d", &m.d},
                            {"heads", &m.heads}, {"depth", &m.depth}, {"ffn_mult", &m.ffn_mult},
                            {"n_class", &m.n_class}, {"n_prom", &m.n_prom}, {"c_text", &m.c_text}})
    s.get(key, *field);
  s.get("pos_emb", m.pos_emb);
  s.get("use_sse", m.use_sse);
  s.get("use_rssa", m.use_rssa);
  s.get_enum("aggregation", m.aggregation, kAggregation);
  s.get("dropout", m.dropout);
  s.finish();
  m.validate();
  return m;
}

template <class Real>
ArtState<Real> make_state(const RunConfig& cfg) {
  const BankSpec spec = cfg.bank_spec();
  Tensor<Real> s0 = cfg.bank_file ? load_bank<Real>(*cfg.bank_file, spec) : generate_synthetic_bank<Real>(spec, cfg.seed);
  ArtState<Real> state;
  state.model = cfg.model;
  state.params = init_model_params(cfg.model, s0, cfg.seed);
  state.bank = SemanticBank<Real>::from_initial(std::move(s0), cfg.train.mu);
  return state;
}

template ArtState<float> make_state<float>(const RunConfig&);
template ArtState<double> make_state<double>(const RunConfig&);

}  // namespace art
