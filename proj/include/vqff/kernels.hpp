// SPDX-License-Identifier: Apache-2.0
#pragma once

// Inner-loop arithmetic used by quantization and querying. Every kernel has a
// scalar reference implementation; AVX2+FMA (x86-64) and NEON (AArch64)
// variants are compiled when the target allows and selected at runtime.
//
// Set VQFF_SIMD=scalar|avx2|neon to force a variant (unknown or unsupported
// values fall back to the best available one).

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace vqff::kernels {

struct KernelTable {
  const char* name;

  /// sum_i a[i]*b[i]
  float (*dot)(const float* a, const float* b, std::size_t d);

  /// out[r] = dot(rows + r*d, v) for r in [0, n_rows)
  void (*matvec)(const float* rows, std::size_t n_rows, std::size_t d, const float* v, float* out);

  /// Row with the largest dot product against v; ties go to the lowest row.
  /// Writes that dot product to *best. n_rows must be >= 1.
  std::uint32_t (*argmax_dot)(const float* rows, std::size_t n_rows, std::size_t d, const float* v,
                              float* best);

  /// acc[i] += double(v[i]). Bitwise identical across variants.
  void (*accumulate)(double* acc, const float* v, std::size_t d);

  /// out[i] = table[idx[i]]
  void (*gather)(const float* table, const std::uint32_t* idx, std::size_t n, float* out);

  /// acc[i] = max(acc[i], v[i])
  void (*max_inplace)(float* acc, const float* v, std::size_t n);

  /// out[i] = v[i] > tau; returns the number of set entries.
  std::size_t (*threshold)(const float* v, std::size_t n, float tau, std::uint8_t* out);
};

const KernelTable& scalar_table();

/// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_table();
const KernelTable* neon_table();

/// Every variant usable on this machine, scalar first.
std::vector<const KernelTable*> available_tables();

/// The variant used by the library. Chosen once on first use.
const KernelTable& active();

/// Overrides the active variant by name; returns false if unavailable.
bool select(std::string_view name);

}  // namespace vqff::kernels
