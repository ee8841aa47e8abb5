// SPDX-License-Identifier: Apache-2.0
#include "art/params.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "art/tensor_io.hpp"

namespace art {

template <class Real>
const Var<Real>& Bound<Real>::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

template <class Real>
void ParamStore<Real>::add(const std::string& name, Tensor<Real> value) {
  if (has(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_[name] = entries_.size();
  Tensor<Real> grad(value.dims());
  entries_.push_back({name, std::move(value), std::move(grad)});
}

template <class Real>
const typename ParamStore<Real>::Entry& ParamStore<Real>::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

template <class Real>
Tensor<Real>& ParamStore<Real>::value(const std::string& name) {
  return const_cast<Entry&>(entry(name)).value;
}
template <class Real>
const Tensor<Real>& ParamStore<Real>::value(const std::string& name) const {
  return entry(name).value;
}
template <class Real>
Tensor<Real>& ParamStore<Real>::grad(const std::string& name) {
  return const_cast<Entry&>(entry(name)).grad;
}
template <class Real>
const Tensor<Real>& ParamStore<Real>::grad(const std::string& name) const {
  return entry(name).grad;
}

template <class Real>
std::size_t ParamStore<Real>::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

template <class Real>
Bound<Real> ParamStore<Real>::bind() const {
  Bound<Real> b;
  for (const auto& e : entries_) b.set(e.name, Var<Real>::leaf(e.value, true));
  return b;
}

template <class Real>
void ParamStore<Real>::accumulate(const Bound<Real>& bound) {
  for (auto& e : entries_) {
    if (!bound.has(e.name)) continue;
    const Var<Real>& v = bound[e.name];
    if (!v.has_grad()) continue;
    const Tensor<Real> g = v.grad();
    for (std::size_t i = 0; i < g.size(); ++i) e.grad[i] += g[i];
  }
}

template <class Real>
void ParamStore<Real>::zero_grad() {
  for (auto& e : entries_) e.grad.fill(Real(0));
}

template <class Real>
double ParamStore<Real>::grad_norm() const {
  double s = 0;
  for (const auto& e : entries_)
    for (Real g : e.grad.data()) s += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(s);
}

template <class Real>
void ParamStore<Real>::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["dtype"] = std::is_same_v<Real, float> ? "f32" : "f64";
  nlohmann::ordered_json files;
  for (const auto& e : entries_) {
    const std::string file = e.name + ".artt";
    io::write_tensor(dir / file, e.value);
    files[e.name] = file;
  }
  manifest["params"] = files;
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

template <class Real>
ParamStore<Real> ParamStore<Real>::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("checkpoint manifest missing in " + dir.string());
  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
  ParamStore out;
  for (const auto& [name, file] : manifest.at("params").items())
    out.add(name, io::read_tensor<Real>(dir / file.template get<std::string>()));
  return out;
}

template <class Real>
Tensor<Real> normal_tensor(Shape dims, double stddev, std::mt19937_64& rng) {
  Tensor<Real> t(std::move(dims));
  std::normal_distribution<double> nd(0.0, stddev);
  for (auto& v : t.data()) v = static_cast<Real>(nd(rng));
  return t;
}

template class Bound<float>;
template class Bound<double>;
template class ParamStore<float>;
template class ParamStore<double>;
template Tensor<float> normal_tensor(Shape, double, std::mt19937_64&);
template Tensor<double> normal_tensor(Shape, double, std::mt19937_64&);

}  // namespace art
