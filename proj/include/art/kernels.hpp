// SPDX-License-Identifier: Apache-2.0
#pragma once

// Contiguous-array inner loops used by the tensor ops. Each kernel has a
// portable scalar reference and an AVX2+FMA variant; the variant is picked
// once per process from CPUID (override with ART_SIMD=scalar|avx2).

#include <cstddef>
#include <string_view>

namespace art::kernels {

enum class Isa { scalar, avx2 };

template <class Real>
struct Table {
  // sum_i x[i] * y[i]
  Real (*dot)(const Real* x, const Real* y, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(Real alpha, const Real* x, Real* y, std::size_t n);
  // out[i] = a[i] + b[i]
  void (*add)(const Real* a, const Real* b, Real* out, std::size_t n);
  // out[i] = a[i] * b[i]
  void (*mul)(const Real* a, const Real* b, Real* out, std::size_t n);
  // out[i] = alpha * x[i]
  void (*scale)(Real alpha, const Real* x, Real* out, std::size_t n);
  // sum_i x[i]
  Real (*sum)(const Real* x, std::size_t n);
  // c[m,n] += a[m,k] * b[k,n], all row-major and dense
  void (*gemm)(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c);
};

bool isa_available(Isa isa);
std::string_view isa_name(Isa isa);

// Kernel table for a specific instruction set. Throws ContractError when the
// host cannot run it.
template <class Real>
const Table<Real>& table(Isa isa);

Isa active_isa();
// Pins the process-wide selection; used by equivalence tests.
void set_active_isa(Isa isa);

template <class Real>
const Table<Real>& active() {
  return table<Real>(active_isa());
}

namespace scalar {
template <class Real>
const Table<Real>& table();
}

namespace avx2 {
// Only meaningful when the build includes the AVX2 translation unit.
bool compiled();
template <class Real>
const Table<Real>& table();
}  // namespace avx2

}  // namespace art::kernels
