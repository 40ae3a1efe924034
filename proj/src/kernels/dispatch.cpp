// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernels_impl.hpp"
#include "vqff/kernels.hpp"

namespace vqff::kernels {
namespace {

#define VQFF_TABLE(ns)                                                                       \
  KernelTable {                                                                              \
#ns, ns::dot, ns::matvec, ns::argmax_dot, ns::accumulate, ns::gather, ns::max_inplace, \
        ns::threshold                                                                        \
  }

const KernelTable kScalar = VQFF_TABLE(scalar);
#if defined(VQFF_HAVE_AVX2)
const KernelTable kAvx2 = VQFF_TABLE(avx2);
#endif
#if defined(VQFF_HAVE_NEON)
const KernelTable kNeon = VQFF_TABLE(neon);
#endif

#undef VQFF_TABLE

const KernelTable* best_available() {
  if (const auto* t = avx2_table()) return t;
  if (const auto* t = neon_table()) return t;
  return &kScalar;
}

const KernelTable* by_name(std::string_view name) {
  if (name == "scalar") return &kScalar;
  if (name == "avx2") return avx2_table();
  if (name == "neon") return neon_table();
  return nullptr;
}

const KernelTable* initial() {
  if (const char* env = std::getenv("VQFF_SIMD")) {
    if (const auto* t = by_name(env)) return t;
  }
  return best_available();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial()};
  return table;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(VQFF_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(VQFF_HAVE_NEON)
  return &kNeon;
#else
  return nullptr;
#endif
}

std::vector<const KernelTable*> available_tables() {
  std::vector<const KernelTable*> out{&kScalar};
  if (const auto* t = avx2_table()) out.push_back(t);
  if (const auto* t = neon_table()) out.push_back(t);
  return out;
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select(std::string_view name) {
  const KernelTable* t = by_name(name);
  if (!t) return false;
  current().store(t, std::memory_order_release);
  return true;
}

}  // namespace vqff::kernels
