// SPDX-License-Identifier: Apache-2.0
// AArch64 only; NEON is part of the base ISA there.
#include <arm_neon.h>

#include "kernels_impl.hpp"

namespace vqff::kernels::neon {

float dot(const float* a, const float* b, std::size_t d) {
  float32x4_t acc0 = vdupq_n_f32(0.0f);
  float32x4_t acc1 = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 8 <= d; i += 8) {
    acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
    acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
  }
  for (; i + 4 <= d; i += 4) acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
  float s = vaddvq_f32(vaddq_f32(acc0, acc1));
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
    float32x4_t x = vld1q_f32(v + i);
    vst1q_f64(acc + i, vaddq_f64(vld1q_f64(acc + i), vcvt_f64_f32(vget_low_f32(x))));
    vst1q_f64(acc + i + 2, vaddq_f64(vld1q_f64(acc + i + 2), vcvt_high_f64_f32(x)));
  }
  for (; i < d; ++i) acc[i] += static_cast<double>(v[i]);
}

void gather(const float* table, const std::uint32_t* idx, std::size_t n, float* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = table[idx[i]];
}

void max_inplace(float* acc, const float* v, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t a = vld1q_f32(acc + i);
    float32x4_t b = vld1q_f32(v + i);
    vst1q_f32(acc + i, vbslq_f32(vcgtq_f32(b, a), b, a));
  }
  for (; i < n; ++i) acc[i] = v[i] > acc[i] ? v[i] : acc[i];
}

std::size_t threshold(const float* v, std::size_t n, float tau, std::uint8_t* out) {
  const float32x4_t t = vdupq_n_f32(tau);
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    uint32x4_t gt = vshrq_n_u32(vcgtq_f32(vld1q_f32(v + i), t), 31);
    std::uint32_t lanes[4];
    vst1q_u32(lanes, gt);
    for (int k = 0; k < 4; ++k) {
      out[i + k] = static_cast<std::uint8_t>(lanes[k]);
      count += lanes[k];
    }
  }
  for (; i < n; ++i) {
    out[i] = v[i] > tau ? 1 : 0;
    count += out[i];
  }
  return count;
}

}  // namespace vqff::kernels::neon
