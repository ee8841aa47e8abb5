// SPDX-License-Identifier: Apache-2.0
#include "loss_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "art/model.hpp"
#include "art/mtc_loss.hpp"
#include "art/rng.hpp"
#include "art/semantic_bank.hpp"

namespace art::oracle {

double cosine(const Vec& a, const Vec& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double spatial(const Cube& r) {
  const std::size_t t_count = r.size(), k = r[0].size();
  if (k < 2) return 0;
  double total = 0;
  for (std::size_t t = 0; t < t_count; ++t)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        if (i != j) total += cosine(r[t][i], r[t][j]);
  return total / double(t_count * k * (k - 1));
}

double adjacent_mean(const Cube& r) {
  const std::size_t t_count = r.size(), k = r[0].size();
  double total = 0;
  for (std::size_t t = 0; t + 1 < t_count; ++t)
    for (std::size_t i = 0; i < k; ++i) total += cosine(r[t][i], r[t + 1][i]);
  return total / double(k * (t_count - 1));
}

double temporal(const Cube& r, double lambda, bool hinge) {
  if (r.size() < 2) return 0;
  const double m = adjacent_mean(r);
  return hinge ? std::max(0.0, lambda - m) : m - lambda;
}

double tracklet(const Cube& r) {
  const std::size_t t_count = r.size(), k = r[0].size();
  if (k < 2) return 0;
  Mat flat(k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t t = 0; t < t_count; ++t) flat[i].insert(flat[i].end(), r[t][i].begin(), r[t][i].end());
  double total = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j) total += cosine(flat[i], flat[j]);
  return total / double(k * (k - 1));
}

Vec aggregate(const Mat& tr, const Mat& s, Aggregation mode) {
  const std::size_t t_count = tr.size(), c = tr[0].size();
  Vec out(c, 0.0);
  if (mode == Aggregation::sum) {
    for (std::size_t t = 0; t < t_count; ++t)
      for (std::size_t x = 0; x < c; ++x) out[x] += tr[t][x];
    return out;
  }
  Vec w(t_count, 0.0);
  for (const Vec& sem : s) {
    Vec score(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      score[t] = 0;
      for (std::size_t x = 0; x < c; ++x) score[t] += sem[x] * tr[t][x];
    }
    const double m = *std::max_element(score.begin(), score.end());
    double z = 0;
    for (double v : score) z += std::exp(v - m);
    for (std::size_t t = 0; t < t_count; ++t) w[t] += std::exp(score[t] - m) / z / double(s.size());
  }
  double wsum = 0;
  for (std::size_t t = 0; t < t_count; ++t) {
    wsum += w[t];
    for (std::size_t x = 0; x < c; ++x) out[x] += w[t] * tr[t][x];
  }
  const double div = mode == Aggregation::literal ? double(t_count) : wsum;
  for (double& v : out) v /= div;
  return out;
}

namespace {

double cross_entropy(const Vec& z, std::size_t y) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s) - z[y];
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

double video_consistency(const Vec& x, const Cube& sa, const Mat& proj, std::size_t label) {
  const std::size_t np = sa.size(), nc = sa[0].size(), c = proj[0].size();
  Vec scores(nc, -1e300);
  for (std::size_t j = 0; j < nc; ++j)
    for (std::size_t i = 0; i < np; ++i) {
      Vec e(c, 0.0);
      for (std::size_t t = 0; t < proj.size(); ++t)
        for (std::size_t x2 = 0; x2 < c; ++x2) e[x2] += sa[i][j][t] * proj[t][x2];
      scores[j] = std::max(scores[j], cosine(x, e));
    }
  return cross_entropy(scores, label);
}

Mat prototype_mlp(const Mat& w, const Mat& w1, const Vec& b1, const Mat& w2, const Vec& b2) {
  Mat out;
  for (const Vec& row : w) {
    Vec h(b1);
    for (std::size_t d = 0; d < row.size(); ++d)
      for (std::size_t j = 0; j < h.size(); ++j) h[j] += row[d] * w1[d][j];
    for (double& v : h) v = gelu(v);
    Vec o(b2);
    for (std::size_t i = 0; i < h.size(); ++i)
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += h[i] * w2[i][j];
    out.push_back(o);
  }
  return out;
}

double prototype_consistency(const Mat& mapped, const Cube& sa, bool mean_reduction) {
  const std::size_t np = sa.size(), nc = sa[0].size();
  double total = 0;
  for (std::size_t a = 0; a < nc; ++a) {
    Vec row(nc, 0.0);
    for (std::size_t b = 0; b < nc; ++b)
      for (std::size_t i = 0; i < np; ++i) row[b] += cosine(mapped[a], sa[i][b]) / double(np);
    total += cross_entropy(row, a);
  }
  return mean_reduction ? total / double(nc) : total;
}

double LossSuiteResult::worst() const {
  double w = 0;
  for (const auto& l : losses) w = std::max(w, l.max_abs);
  return w;
}

namespace {

struct Gen {
  std::mt19937_64 rng;
  std::size_t pick(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  Vec vec(std::size_t n) {
    Vec v(n);
    for (double& x : v) x = normal();
    return v;
  }
  Mat mat(std::size_t r, std::size_t c) {
    Mat m;
    for (std::size_t i = 0; i < r; ++i) m.push_back(vec(c));
    return m;
  }
  Cube cube(std::size_t a, std::size_t b, std::size_t c) {
    Cube x;
    for (std::size_t i = 0; i < a; ++i) x.push_back(mat(b, c));
    return x;
  }
};

Tensor<double> to_tensor(const Vec& v) { return Tensor<double>({v.size()}, v); }

Tensor<double> to_tensor(const Mat& m) {
  std::vector<double> d;
  for (const auto& r : m) d.insert(d.end(), r.begin(), r.end());
  return Tensor<double>({m.size(), m[0].size()}, std::move(d));
}

Tensor<double> to_tensor(const Cube& x) {
  std::vector<double> d;
  for (const auto& m : x)
    for (const auto& r : m) d.insert(d.end(), r.begin(), r.end());
  return Tensor<double>({x.size(), x[0].size(), x[0][0].size()}, std::move(d));
}

Var<double> c(const Tensor<double>& t) { return Var<double>::constant(t); }

double max_abs_diff(const Tensor<double>& a, const Vec& b) {
  double m = 0;
  for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

LossSuiteResult run_loss_suite(std::uint64_t seed, std::size_t instances) {
  const char* names[] = {"spatial",
                         "temporal_hinge",
                         "temporal_literal",
                         "tracklet",
                         "aggregation_literal",
                         "aggregation_normalized",
                         "aggregation_sum",
                         "video_consistency",
                         "prototype_consistency_mean",
                         "prototype_consistency_sum",
                         "prototype_mlp_consistency"};
  LossSuiteResult out;
  for (const char* n : names) out.losses.push_back({n, 0.0, 0});
  auto record = [&](std::size_t idx, double dev) {
    out.losses[idx].max_abs = std::max(out.losses[idx].max_abs, std::isfinite(dev) ? dev : HUGE_VAL);
    ++out.losses[idx].instances;
  };

  for (std::size_t n = 0; n < instances; ++n) {
    Gen g{substream(seed, "losses", n)};
    const std::size_t t_count = g.pick(1, 4), k = g.pick(1, 3), cdim = g.pick(2, 8);
    const double lambda = g.uniform(-1.0, 1.0);

    const Cube r = g.cube(t_count, k, cdim);
    std::vector<Var<double>> resp;
    for (const Mat& frame : r) resp.push_back(c(to_tensor(frame)));
    const auto tracklets = form_tracklets(resp);
    record(0, std::abs(spatial_loss(resp).item() - spatial(r)));
    record(1, std::abs(temporal_loss(resp, {lambda, TemporalMode::hinge}).item() - temporal(r, lambda, true)));
    record(2, std::abs(temporal_loss(resp, {lambda, TemporalMode::literal}).item() - temporal(r, lambda, false)));
    record(3, std::abs(tracklet_loss(tracklets).item() - tracklet(r)));

    const Mat tr = g.mat(t_count, cdim), sem = g.mat(k, cdim);
    const AggregationMode lib_modes[] = {AggregationMode::literal, AggregationMode::normalized, AggregationMode::sum};
    const Aggregation modes[] = {Aggregation::literal, Aggregation::normalized, Aggregation::sum};
    for (int m = 0; m < 3; ++m)
      record(4 + m, max_abs_diff(aggregate_tracklet(c(to_tensor(tr)), c(to_tensor(sem)), lib_modes[m]).value(),
                                 aggregate(tr, sem, modes[m])));

    const std::size_t nc = g.pick(std::max<std::size_t>(k, 2), 4), np = g.pick(1, 3), ct = g.pick(2, 8);
    const std::size_t d = g.pick(2, 8);
    const Cube sa = g.cube(np, nc, ct);
    const Mat proj = g.mat(ct, cdim);
    const Vec x = g.vec(cdim);
    const std::size_t y = g.pick(0, nc - 1);
    record(7, std::abs(video_consistency_loss(c(to_tensor(x)), c(to_tensor(sa)), c(to_tensor(proj)), y).item() -
                       video_consistency(x, sa, proj, y)));

    const Mat mapped = g.mat(nc, ct);
    const auto sim = prototype_similarity(c(to_tensor(mapped)), c(to_tensor(sa)));
    record(8, std::abs(prototype_consistency_loss(sim, PrototypeReduction::mean).item() -
                       prototype_consistency(mapped, sa, true)));
    record(9, std::abs(prototype_consistency_loss(sim, PrototypeReduction::sum).item() -
                       prototype_consistency(mapped, sa, false)));

    const Mat w = g.mat(nc, d), w1 = g.mat(d, ct), w2 = g.mat(ct, ct);
    const Vec b1 = g.vec(ct), b2 = g.vec(ct);
    Bound<double> p;
    p.set("mlp.w1", c(to_tensor(w1)));
    p.set("mlp.b1", c(to_tensor(b1)));
    p.set("mlp.w2", c(to_tensor(w2)));
    p.set("mlp.b2", c(to_tensor(b2)));
    const auto lib_mapped = prototype_mlp(p, c(to_tensor(w)));
    record(10, std::abs(prototype_consistency_loss(prototype_similarity(lib_mapped, c(to_tensor(sa)))).item() -
                        prototype_consistency(prototype_mlp(w, w1, b1, w2, b2), sa, true)));
  }
  return out;
}

}  // namespace art::oracle
