// SPDX-License-Identifier: Apache-2.0
#pragma once

// ARTT binary tensor files:
//   "ARTT" | u32 version (=1) | u8 dtype (0=f32, 1=f64) | u32 rank |
//   u32 dims[rank] | payload, little-endian, row-major.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <variant>

#include "art/tensor.hpp"

namespace art::io {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

template <class Real>
void write_tensor(std::ostream& os, const Tensor<Real>& t);
template <class Real>
void write_tensor(const std::filesystem::path& path, const Tensor<Real>& t);

AnyTensor read_any(std::istream& is);
AnyTensor read_any(const std::filesystem::path& path);

// Reads and converts to Real. Conversion f64 -> f32 rounds; same-dtype reads
// are bit-exact.
template <class Real>
Tensor<Real> read_tensor(const std::filesystem::path& path);

}  // namespace art::io
