// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "art/autograd.hpp"

namespace art {

// Leaf variables for one forward pass, keyed by parameter name.
template <class Real>
class Bound {
 public:
  void set(const std::string& name, Var<Real> v) { vars_[name] = std::move(v); }
  const Var<Real>& operator[](const std::string& name) const;
  bool has(const std::string& name) const { return vars_.count(name) != 0; }
  const std::map<std::string, Var<Real>>& vars() const { return vars_; }

 private:
  std::map<std::string, Var<Real>> vars_;
};

// Named trainable tensors with gradient accumulators. Each forward pass binds
// fresh leaves (bind), so independent passes never share gradient storage;
// accumulate() folds a pass's leaf gradients back in a caller-chosen order.
template <class Real>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<Real> value;
    Tensor<Real> grad;
  };

  void add(const std::string& name, Tensor<Real> value);
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<Real>& value(const std::string& name);
  const Tensor<Real>& value(const std::string& name) const;
  Tensor<Real>& grad(const std::string& name);
  const Tensor<Real>& grad(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t count() const { return entries_.size(); }
  std::size_t total_size() const;

  Bound<Real> bind() const;
  void accumulate(const Bound<Real>& bound);
  void zero_grad();
  double grad_norm() const;

  // Directory of ARTT files plus manifest.json mapping names to files.
  void save(const std::filesystem::path& dir) const;
  static ParamStore load(const std::filesystem::path& dir);

  template <class Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<Other>());
    return out;
  }

 private:
  const Entry& entry(const std::string& name) const;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Initializers shared by the layer builders.
template <class Real>
Tensor<Real> normal_tensor(Shape dims, double stddev, std::mt19937_64& rng);

}  // namespace art
