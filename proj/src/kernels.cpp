// SPDX-License-Identifier: Apache-2.0
#include "art/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "art/error.hpp"

namespace art::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  const bool avx2_ok = avx2::compiled() && cpu_has_avx2();
  if (const char* env = std::getenv("ART_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Isa::scalar;
    if (v == "avx2" && avx2_ok) return Isa::avx2;
  }
  return avx2_ok ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& selected() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return avx2::compiled() && cpu_has_avx2();
  }
  return false;
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

template <class Real>
const Table<Real>& table(Isa isa) {
  if (!isa_available(isa))
    throw ContractError("instruction set not available: " + std::string(isa_name(isa)));
  return isa == Isa::avx2 ? avx2::table<Real>() : scalar::table<Real>();
}

template const Table<float>& table<float>(Isa);
template const Table<double>& table<double>(Isa);

Isa active_isa() { return selected().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa))
    throw ContractError("instruction set not available: " + std::string(isa_name(isa)));
  selected().store(isa, std::memory_order_relaxed);
}

}  // namespace art::kernels
