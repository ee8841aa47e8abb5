// SPDX-License-Identifier: Apache-2.0
#include "art/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "art/config.hpp"
#include "art/rng.hpp"

namespace art {

bool GradcheckReport::passed() const {
  return !cases.empty() && std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed; });
}

std::vector<std::string> GradcheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& c : cases)
    if (!c.passed) out.push_back(c.op);
  return out;
}

GradcheckCase check_gradient(const std::string& name, const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                             const GradcheckOptions& opts) {
  GradcheckCase result;
  result.op = name;

  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) leaves.push_back(Var<double>::leaf(t));
  {
    Graph<double> graph;
    graph.set_corruption(opts.corruption);
    GraphScope<double> scope(graph);
    const Var<double> y = f(leaves);
    graph.backward(y);
  }

  // Numeric side runs without a graph: plain evaluation.
  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    std::vector<Var<double>> vs;
    for (const auto& t : xs) vs.push_back(Var<double>::constant(t));
    return f(vs).item();
  };

  std::vector<Tensor<double>> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double> analytic = leaves[i].grad();
    double max_diff = 0, scale = 1e-6;
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      const double x0 = inputs[i][e];
      work[i][e] = x0 + opts.h;
      const double up = eval(work);
      work[i][e] = x0 - opts.h;
      const double down = eval(work);
      work[i][e] = x0;
      const double numeric = (up - down) / (2 * opts.h);
      max_diff = std::max(max_diff, std::abs(analytic[e] - numeric));
      scale = std::max({scale, std::abs(analytic[e]), std::abs(numeric)});
      ++result.entries;
    }
    result.max_rel_error = std::max(result.max_rel_error, max_diff / scale);
  }
  result.passed = std::isfinite(result.max_rel_error) && result.max_rel_error < opts.tolerance;
  return result;
}

namespace {

using V = Var<double>;
using T = Tensor<double>;

T randn(Shape dims, std::mt19937_64& rng, double sd = 1.0) { return normal_tensor<double>(std::move(dims), sd, rng); }

// Strictly positive entries, away from zero.
T rand_pos(Shape dims, std::mt19937_64& rng) {
  T t(std::move(dims));
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Reduces an arbitrary op output to a scalar with fixed random weights, so
// every output entry carries a distinct gradient.
V weighted(const V& y, std::uint64_t seed) {
  auto rng = substream(seed, "gradcheck.weights", y.size());
  return sum(mul(y, V::constant(randn(y.dims(), rng))));
}

struct Suite {
  const GradcheckOptions& opts;
  GradcheckReport report;
  std::mt19937_64 rng;

  void add(const std::string& name, const ScalarFn& f, const std::vector<T>& inputs) {
    report.cases.push_back(check_gradient(name, f, inputs, opts));
  }
};

ModelConfig tiny_model() {
  ModelConfig m;
  m.T = 2;
  m.H = 2;
  m.W = 2;
  m.C = 8;
  m.K = 2;
  m.n_class = 3;
  m.n_prom = 2;
  m.c_text = 6;
  m.d = 8;
  m.heads = 2;
  m.depth = 2;
  return m;
}

void end_to_end(Suite& s) {
  const ModelConfig m = tiny_model();
  const std::uint64_t seed = s.opts.seed;
  const T bank = generate_synthetic_bank<double>({m.n_prom, m.n_class, m.c_text, 0.3}, seed);
  const ParamStore<double> store = init_model_params(m, bank, seed);
  auto rng = substream(seed, "gradcheck.video");
  const FeatureVolume<double> video{randn({m.T, m.H, m.W, m.C}, rng)};
  TrainConfig tc;
  const std::size_t label = 1;

  std::vector<std::string> names;
  std::vector<T> values;
  for (const auto& e : store.entries()) {
    names.push_back(e.name);
    values.push_back(e.value);
  }
  ScalarFn f = [&](const std::vector<V>& xs) {
    Bound<double> b;
    for (std::size_t i = 0; i < xs.size(); ++i) b.set(names[i], xs[i]);
    const ArtOutputs<double> out = art_forward(b, m, bank, video);
    return loss_total(b, m, out, label, tc).total;
  };
  s.add("end_to_end", f, values);
}

}  // namespace

GradcheckReport run_gradcheck_suite(const GradcheckOptions& opts) {
  Suite s{opts, {}, substream(opts.seed, "gradcheck")};
  auto& r = s.rng;
  const std::uint64_t w = opts.seed;

  s.add("matmul", [&](const std::vector<V>& x) { return weighted(matmul(x[0], x[1]), w); },
        {randn({3, 4}, r), randn({4, 5}, r)});
  s.add("add", [&](const std::vector<V>& x) { return weighted(add(x[0], x[1]), w); }, {randn({2, 3}, r), randn({2, 3}, r)});
  s.add("sub", [&](const std::vector<V>& x) { return weighted(sub(x[0], x[1]), w); }, {randn({2, 3}, r), randn({2, 3}, r)});
  s.add("mul", [&](const std::vector<V>& x) { return weighted(mul(x[0], x[1]), w); }, {randn({2, 3}, r), randn({2, 3}, r)});
  s.add("scale", [&](const std::vector<V>& x) { return weighted(scale(x[0], 0.7), w); }, {randn({4}, r)});
  s.add("add_scalar", [&](const std::vector<V>& x) { return weighted(add_scalar(x[0], 1.5), w); }, {randn({4}, r)});
  s.add("add_row", [&](const std::vector<V>& x) { return weighted(add_row(x[0], x[1]), w); },
        {randn({3, 4}, r), randn({4}, r)});
  s.add("concat", [&](const std::vector<V>& x) { return weighted(concat<double>({x[0], x[1]}, 1), w); },
        {randn({2, 3}, r), randn({2, 2}, r)});
  s.add("slice", [&](const std::vector<V>& x) { return weighted(slice(x[0], 1, 1, 3), w); }, {randn({3, 4}, r)});
  s.add("reshape", [&](const std::vector<V>& x) { return weighted(reshape(x[0], {6, 2}), w); }, {randn({3, 4}, r)});
  s.add("transpose", [&](const std::vector<V>& x) { return weighted(transpose(x[0]), w); }, {randn({3, 4}, r)});
  s.add("sum", [&](const std::vector<V>& x) { return mul(sum(x[0]), sum(x[0])); }, {randn({5}, r)});
  s.add("mean_all", [&](const std::vector<V>& x) { return mul(mean_all(x[0]), mean_all(x[0])); }, {randn({2, 3}, r)});
  s.add("mean", [&](const std::vector<V>& x) { return weighted(mean(x[0], 0), w); }, {randn({3, 4}, r)});
  s.add("max", [&](const std::vector<V>& x) { return weighted(max(x[0], 1), w); }, {randn({3, 5}, r)});
  s.add("layer_norm", [&](const std::vector<V>& x) { return weighted(layer_norm(x[0], x[1], x[2]), w); },
        {randn({3, 6}, r), randn({6}, r), randn({6}, r)});
  s.add("gelu", [&](const std::vector<V>& x) { return weighted(gelu(x[0]), w); }, {randn({8}, r, 2.0)});
  s.add("relu", [&](const std::vector<V>& x) { return weighted(relu(x[0]), w); }, {randn({8}, r)});
  s.add("softmax", [&](const std::vector<V>& x) { return weighted(softmax(x[0], 1), w); }, {randn({3, 5}, r)});
  s.add("cross_entropy", [&](const std::vector<V>& x) { return cross_entropy(x[0], 2); }, {randn({5}, r)});
  s.add("cosine", [&](const std::vector<V>& x) { return cosine(x[0], x[1]); }, {randn({6}, r), randn({6}, r)});
  s.add("cosine_rows", [&](const std::vector<V>& x) { return weighted(cosine_rows(x[0], x[1]), w); },
        {randn({3, 5}, r), randn({3, 5}, r)});
  s.add("cosine_matrix", [&](const std::vector<V>& x) { return weighted(cosine_matrix(x[0], x[1]), w); },
        {randn({3, 5}, r), randn({4, 5}, r)});
  s.add("gather_rows", [&](const std::vector<V>& x) { return weighted(gather_rows<double>(x[0], {2, 0, 2}), w); },
        {randn({3, 4}, r)});
  s.add("embedding_lookup",
        [&](const std::vector<V>& x) { return weighted(embedding_lookup<double>(x[0], {1, 1, 3}), w); },
        {randn({4, 3}, r)});
  s.add("dropout",
        [&](const std::vector<V>& x) {
          auto drng = substream(w, "gradcheck.dropout");
          return weighted(dropout(x[0], 0.3, drng), w);
        },
        {randn({10}, r)});

  s.add("scaled_dot_attention",
        [&](const std::vector<V>& x) { return weighted(scaled_dot_attention(x[0], x[1], x[2]), w); },
        {randn({3, 4}, r), randn({5, 4}, r), randn({5, 4}, r)});
  {
    auto mrng = substream(w, "gradcheck.mask");
    const T mask = randn({3, 5}, mrng);
    s.add("multi_head_attention",
          [&, mask](const std::vector<V>& x) { return weighted(multi_head_attention(x[0], x[1], x[2], 2, &mask), w); },
          {randn({3, 8}, r), randn({5, 8}, r), randn({5, 8}, r)});
  }
  {
    const AttentionDims dims{4, 8, 2, 8};
    ParamStore<double> layers;
    init_msa_layer(layers, "msa", dims, r);
    init_mca_layer(layers, "mca", dims, r);
    for (const char* which : {"msa", "mca"}) {
      std::vector<std::string> names;
      std::vector<T> values;
      for (const auto& e : layers.entries())
        if (e.name.rfind(which, 0) == 0) {
          names.push_back(e.name);
          values.push_back(e.value);
        }
      const bool cross = std::string(which) == "mca";
      values.push_back(randn({cross ? 2u : 3u, 4}, r));
      if (cross) values.push_back(randn({5, 4}, r));
      s.add(std::string(which) + "_layer",
            [&, names, cross, which](const std::vector<V>& x) {
              Bound<double> b;
              for (std::size_t i = 0; i < names.size(); ++i) b.set(names[i], x[i]);
              const V& tokens = x[names.size()];
              return weighted(cross ? mca_layer(b, which, tokens, x[names.size() + 1], dims)
                                    : msa_layer(b, which, tokens, dims),
                              w);
            },
            values);
    }
  }

  // Losses over T = 3 frames of K = 3 responses.
  auto split = [](const std::vector<V>& x, std::size_t n) { return std::vector<V>(x.begin(), x.begin() + n); };
  std::vector<T> frames;
  for (int t = 0; t < 3; ++t) frames.push_back(randn({3, 4}, r));
  s.add("spatial_loss", [&](const std::vector<V>& x) { return spatial_loss(x); }, frames);
  for (TemporalMode mode : {TemporalMode::hinge, TemporalMode::literal}) {
    // lambda near 1 keeps the hinge active for random responses.
    const MtcConfig mc{0.99, mode};
    s.add("temporal_loss_" + to_string(mode), [&, mc](const std::vector<V>& x) { return temporal_loss(x, mc); },
          frames);
  }
  s.add("tracklet_loss", [&](const std::vector<V>& x) { return tracklet_loss(form_tracklets(x)); }, frames);
  s.add("mtc_total",
        [&](const std::vector<V>& x) {
          return mtc_total(split(x, 3), form_tracklets(split(x, 3)), MtcConfig{}).total;
        },
        frames);
  for (AggregationMode mode : {AggregationMode::literal, AggregationMode::normalized, AggregationMode::sum})
    s.add("aggregate_tracklet_" + to_string(mode),
          [&, mode](const std::vector<V>& x) { return weighted(aggregate_tracklet(x[0], x[1], mode), w); },
          {randn({4, 5}, r), randn({2, 5}, r)});
  s.add("video_consistency_loss",
        [&](const std::vector<V>& x) { return video_consistency_loss(x[0], x[1], x[2], 1); },
        {randn({4}, r), randn({2, 3, 5}, r), randn({5, 4}, r)});
  s.add("prototype_consistency_loss",
        [&](const std::vector<V>& x) {
          return prototype_consistency_loss(prototype_similarity(x[0], x[1]), PrototypeReduction::mean);
        },
        {randn({3, 5}, r), randn({2, 3, 5}, r)});
  {
    ParamStore<double> mlp;
    init_bank_params(mlp, rand_pos({2, 3, 5}, r), 4, 6, r);
    std::vector<std::string> names;
    std::vector<T> values;
    for (const auto& e : mlp.entries())
      if (e.name.rfind("mlp.", 0) == 0) {
        names.push_back(e.name);
        values.push_back(e.value);
      }
    values.push_back(randn({3, 6}, r));
    s.add("prototype_mlp",
          [&, names](const std::vector<V>& x) {
            Bound<double> b;
            for (std::size_t i = 0; i < names.size(); ++i) b.set(names[i], x[i]);
            return weighted(prototype_mlp(b, x[names.size()]), w);
          },
          values);
  }

  if (opts.include_end_to_end) end_to_end(s);
  return std::move(s.report);
}

}  // namespace art
