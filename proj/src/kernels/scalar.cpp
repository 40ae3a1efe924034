// SPDX-License-Identifier: Apache-2.0
#include "kernels_impl.hpp"

namespace vqff::kernels::scalar {

float dot(const float* a, const float* b, std::size_t d) {
  float s = 0.0f;
  for (std::size_t i = 0; i < d; ++i) s += a[i] * b[i];
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
  for (std::size_t i = 0; i < d; ++i) acc[i] += static_cast<double>(v[i]);
}

void gather(const float* table, const std::uint32_t* idx, std::size_t n, float* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = table[idx[i]];
}

void max_inplace(float* acc, const float* v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] = v[i] > acc[i] ? v[i] : acc[i];
}

std::size_t threshold(const float* v, std::size_t n, float tau, std::uint8_t* out) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = v[i] > tau ? 1 : 0;
    count += out[i];
  }
  return count;
}

}  // namespace vqff::kernels::scalar
