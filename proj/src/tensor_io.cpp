// SPDX-License-Identifier: Apache-2.0
#include "art/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace art::io {
namespace {

static_assert(std::endian::native == std::endian::little, "ARTT IO assumes a little-endian host");

constexpr std::array<char, 4> kMagic{'A', 'R', 'T', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("ARTT: truncated header");
  return v;
}

template <class Real>
constexpr DType dtype_of() {
  return std::is_same_v<Real, float> ? DType::f32 : DType::f64;
}

template <class Real>
Tensor<Real> read_payload(std::istream& is, Shape dims) {
  Tensor<Real> t(std::move(dims));
  const auto bytes = static_cast<std::streamsize>(t.size() * sizeof(Real));
  if (bytes > 0 && !is.read(reinterpret_cast<char*>(t.ptr()), bytes)) throw FormatError("ARTT: truncated payload");
  return t;
}

}  // namespace

template <class Real>
void write_tensor(std::ostream& os, const Tensor<Real>& t) {
  os.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(os, kVersion);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(dtype_of<Real>()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.dims()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(Real)));
  if (!os) throw FormatError("ARTT: write failed");
}

template <class Real>
void write_tensor(const std::filesystem::path& path, const Tensor<Real>& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("ARTT: cannot open for writing: " + path.string());
  write_tensor(os, t);
}

AnyTensor read_any(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("ARTT: bad magic");
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) throw FormatError("ARTT: unsupported version " + std::to_string(version));
  const auto dtype = get<std::uint8_t>(is);
  const auto rank = get<std::uint32_t>(is);
  if (rank > 16) throw FormatError("ARTT: implausible rank " + std::to_string(rank));
  Shape dims(rank);
  for (auto& d : dims) d = get<std::uint32_t>(is);
  switch (static_cast<DType>(dtype)) {
    case DType::f32:
      return read_payload<float>(is, std::move(dims));
    case DType::f64:
      return read_payload<double>(is, std::move(dims));
  }
  throw FormatError("ARTT: unknown dtype " + std::to_string(dtype));
}

AnyTensor read_any(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("ARTT: cannot open " + path.string());
  return read_any(is);
}

template <class Real>
Tensor<Real> read_tensor(const std::filesystem::path& path) {
  return std::visit(
      [](auto&& t) -> Tensor<Real> {
        using T = typename std::decay_t<decltype(t)>::value_type;
        if constexpr (std::is_same_v<T, Real>)
          return std::move(t);
        else
          return t.template cast<Real>();
      },
      read_any(path));
}

template void write_tensor(std::ostream&, const Tensor<float>&);
template void write_tensor(std::ostream&, const Tensor<double>&);
template void write_tensor(const std::filesystem::path&, const Tensor<float>&);
template void write_tensor(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> read_tensor(const std::filesystem::path&);
template Tensor<double> read_tensor(const std::filesystem::path&);

}  // namespace art::io
