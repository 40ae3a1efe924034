// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-ISA kernel entry points. Only plain pointer/size signatures here so the
// ISA-specific translation units never instantiate shared inline templates.

#include <cstddef>
#include <cstdint>

#define VQFF_DECLARE_KERNELS                                                                       \
  float dot(const float* a, const float* b, std::size_t d);                                        \
  void matvec(const float* rows, std::size_t n_rows, std::size_t d, const float* v, float* out);   \
  std::uint32_t argmax_dot(const float* rows, std::size_t n_rows, std::size_t d, const float* v,   \
                           float* best);                                                           \
  void accumulate(double* acc, const float* v, std::size_t d);                                     \
  void gather(const float* table, const std::uint32_t* idx, std::size_t n, float* out);            \
  void max_inplace(float* acc, const float* v, std::size_t n);                                     \
  std::size_t threshold(const float* v, std::size_t n, float tau, std::uint8_t* out);

namespace vqff::kernels::scalar {
VQFF_DECLARE_KERNELS
}

#if defined(VQFF_HAVE_AVX2)
namespace vqff::kernels::avx2 {
VQFF_DECLARE_KERNELS
}
#endif

#if defined(VQFF_HAVE_NEON)
namespace vqff::kernels::neon {
VQFF_DECLARE_KERNELS
}
#endif

#undef VQFF_DECLARE_KERNELS
