// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small generators and comparison helpers shared by the test binaries.

#include <algorithm>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "art/autograd.hpp"
#include "art/params.hpp"
#include "art/tensor.hpp"

namespace art::test {

struct Gen {
  explicit Gen(std::uint64_t seed) : rng(seed) {}
  std::mt19937_64 rng;

  std::size_t pick(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng); }

  template <class Real = double>
  Tensor<Real> tensor(Shape dims, double sd = 1.0) {
    Tensor<Real> t(std::move(dims));
    for (auto& v : t.data()) v = static_cast<Real>(sd * normal());
    return t;
  }
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    std::shuffle(p.begin(), p.end(), rng);
    return p;
  }
};

template <class Real>
double max_abs_diff(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.dims() != b.dims()) return HUGE_VAL;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

template <class Real>
bool bit_equal(const Tensor<Real>& a, const Tensor<Real>& b) {
  return a.dims() == b.dims() && std::equal(a.data().begin(), a.data().end(), b.data().begin(),
                                            [](Real x, Real y) { return std::memcmp(&x, &y, sizeof(Real)) == 0; });
}

inline Var<double> leaf(const Tensor<double>& t) { return Var<double>::leaf(t); }
inline Var<double> cst(const Tensor<double>& t) { return Var<double>::constant(t); }
inline Tensor<double> mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor<double>({r, c}, std::move(v)); }
inline Tensor<double> vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>({n}, std::move(v));
}

inline std::vector<std::vector<double>> to_rows(const Tensor<double>& t) {
  std::vector<std::vector<double>> r(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) r[i][j] = t(i, j);
  return r;
}

inline std::vector<double> to_vec(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

inline double max_abs_diff(const Tensor<double>& t, const std::vector<std::vector<double>>& r) {
  double m = 0;
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r[i].size(); ++j) m = std::max(m, std::abs(t(i, j) - r[i][j]));
  return m;
}

// Row r of the result is row perm[r] of t; works on any (n, ...) tensor.
template <class Real>
Tensor<Real> permute_rows(const Tensor<Real>& t, const std::vector<std::size_t>& perm) {
  Tensor<Real> out(t.dims());
  const std::size_t stride = t.size() / t.dim(0);
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::copy_n(t.ptr() + perm[i] * stride, stride, out.ptr() + i * stride);
  return out;
}

// Redraws every parameter, including norm gains and biases, so identity-like
// initial values cannot hide mistakes.
inline void randomize(ParamStore<double>& p, Gen& g, double sd = 0.7) {
  for (auto& e : p.entries())
    for (auto& v : e.value.data()) v = sd * g.normal();
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("art_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace art::test
