// SPDX-License-Identifier: Apache-2.0
#include "art/dataset_io.hpp"

#include <algorithm>
#include <fstream>

#include "art/error.hpp"
#include "art/tensor_io.hpp"

namespace art {

template <class Real>
void write_dataset(const std::filesystem::path& dir, const std::vector<DatasetSplit<Real>>& splits,
                   const nlohmann::ordered_json& synth_echo) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest{{"synth", synth_echo}, {"splits", nlohmann::ordered_json::object()}};
  for (const auto& split : splits) {
    if (split.samples.empty()) throw ContractError("write_dataset: split " + split.name + " is empty");
    Shape dims{split.samples.size()};
    const Shape& one = split.samples.front().video.x.dims();
    dims.insert(dims.end(), one.begin(), one.end());
    Tensor<Real> x(dims);
    const std::size_t stride = split.samples.front().video.x.size();
    nlohmann::ordered_json labels = nlohmann::ordered_json::array(), truth = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < split.samples.size(); ++i) {
      const auto& s = split.samples[i];
      if (s.video.x.dims() != one) throw ShapeError("write_dataset: inconsistent sample shapes");
      std::copy_n(s.video.x.ptr(), stride, x.ptr() + i * stride);
      labels.push_back(s.label);
      truth.push_back(s.truth);
    }
    const std::string file = split.name + "_x.artt";
    io::write_tensor(dir / file, x);
    manifest["splits"][split.name] = {
        {"file", file}, {"first_index", split.first_index}, {"labels", labels}, {"truth", truth}};
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw FormatError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(1) << '\n';
}

template <class Real>
std::vector<SynthSample<Real>> read_dataset(const std::filesystem::path& dir, const std::string& split) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("dataset manifest missing in " + dir.string());
  try {
    const auto manifest = nlohmann::ordered_json::parse(in);
    const auto& entry = manifest.at("splits").at(split);
    const Tensor<Real> x = io::read_tensor<Real>(dir / entry.at("file").template get<std::string>());
    const auto labels = entry.at("labels").template get<std::vector<std::size_t>>();
    const auto truth = entry.at("truth").template get<std::vector<std::vector<std::vector<GridPos>>>>();
    if (x.rank() != 5 || x.dim(0) != labels.size() || truth.size() != labels.size())
      throw FormatError("dataset split " + split + ": feature tensor and manifest disagree");
    const Shape one{x.dim(1), x.dim(2), x.dim(3), x.dim(4)};
    const std::size_t stride = x.size() / labels.size();
    std::vector<SynthSample<Real>> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      out[i].video.x = Tensor<Real>(one);
      std::copy_n(x.ptr() + i * stride, stride, out[i].video.x.ptr());
      out[i].label = labels[i];
      out[i].truth = truth[i];
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("dataset manifest: " + std::string(e.what()));
  }
}

#define ART_INSTANTIATE(R)                                                                               \
  template void write_dataset(const std::filesystem::path&, const std::vector<DatasetSplit<R>>&,         \
                              const nlohmann::ordered_json&);                                            \
  template std::vector<SynthSample<R>> read_dataset(const std::filesystem::path&, const std::string&);

ART_INSTANTIATE(float)
ART_INSTANTIATE(double)
#undef ART_INSTANTIATE

}  // namespace art
