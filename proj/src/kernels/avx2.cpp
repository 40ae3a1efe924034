// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include "kernels_impl.hpp"

namespace vqff::kernels::avx2 {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

}  // namespace

float dot(const float* a, const float* b, std::size_t d) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= d; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= d; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float s = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < d; ++i) s += a[i] * b[i];
  return s;
}

void matvec(const float* rows, std::size_t n_rows, std::size_t d, const float* v, float* out) {
  for (std::size_t r = 0; r < n_rows; ++r) out[r] = dot(rows + r * d, v, d);
}

std::uint32_t argmax_dot(const float* rows, std::size_t n_rows, std::size_t d, const float* v,
                         float* best) {
  std::uint32_t arg = 0;
  float top = dot(rows, v, d);
  for (std::size_t r = 1; r < n_rows; ++r) {
    const float s = dot(rows + r * d, v, d);
    if (s > top) {
      top = s;
      arg = static_cast<std::uint32_t>(r);
    }
  }
  if (best) *best = top;
  return arg;
}

void accumulate(double* acc, const float* v, std::size_t d) {
  std::size_t i = 0;
  for (; i + 4 <= d; i += 4) {
    __m256d x = _mm256_cvtps_pd(_mm_loadu_ps(v + i));
    _mm256_storeu_pd(acc + i, _mm256_add_pd(_mm256_loadu_pd(acc + i), x));
  }
  for (; i < d; ++i) acc[i] += static_cast<double>(v[i]);
}

void gather(const float* table, const std::uint32_t* idx, std::size_t n, float* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256i ix = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(idx + i));
    _mm256_storeu_ps(out + i, _mm256_i32gather_ps(table, ix, 4));
  }
  for (; i < n; ++i) out[i] = table[idx[i]];
}

void max_inplace(float* acc, const float* v, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 a = _mm256_loadu_ps(acc + i);
    __m256 b = _mm256_loadu_ps(v + i);
    // max_ps(b, a) returns a when b is not greater, matching the scalar select
    _mm256_storeu_ps(acc + i, _mm256_max_ps(b, a));
  }
  for (; i < n; ++i) acc[i] = v[i] > acc[i] ? v[i] : acc[i];
}

std::size_t threshold(const float* v, std::size_t n, float tau, std::uint8_t* out) {
  const __m256 t = _mm256_set1_ps(tau);
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const int bits = _mm256_movemask_ps(_mm256_cmp_ps(_mm256_loadu_ps(v + i), t, _CMP_GT_OQ));
    for (int k = 0; k < 8; ++k) out[i + k] = static_cast<std::uint8_t>((bits >> k) & 1);
    count += static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(bits)));
  }
  for (; i < n; ++i) {
    out[i] = v[i] > tau ? 1 : 0;
    count += out[i];
  }
  return count;
}

}  // namespace vqff::kernels::avx2
