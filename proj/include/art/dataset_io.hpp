// SPDX-License-Identifier: Apache-2.0
#pragma once

// On-disk synthetic datasets written by `art synth`:
//   <dir>/manifest.json   {"synth": {...}, "splits": {name: {file, first_index,
//                          labels: [...], truth: [[[row, col] per frame] per part] per sample}}}
//   <dir>/<name>_x.artt   (N, T, H, W, C) features

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "art/synth_data.hpp"
#include "json.hpp"

namespace art {

template <class Real>
struct DatasetSplit {
  std::string name;
  std::size_t first_index = 0;
  std::vector<SynthSample<Real>> samples;
};

template <class Real>
void write_dataset(const std::filesystem::path& dir, const std::vector<DatasetSplit<Real>>& splits,
                   const nlohmann::ordered_json& synth_echo);

// Throws FormatError when the split is missing or the files disagree.
template <class Real>
std::vector<SynthSample<Real>> read_dataset(const std::filesystem::path& dir, const std::string& split);

}  // namespace art
