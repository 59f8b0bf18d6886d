#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>

namespace rcomm::kernels::neon {

void add(float* acc, const float* x, std::size_t n) {
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4)
    vst1q_f32(acc + k, vaddq_f32(vld1q_f32(acc + k), vld1q_f32(x + k)));
  for (; k < n; ++k) acc[k] += x[k];
}

void scale(float* x, float s, std::size_t n) {
  float32x4_t vs = vdupq_n_f32(s);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4)
    vst1q_f32(x + k, vmulq_f32(vld1q_f32(x + k), vs));
  for (; k < n; ++k) x[k] *= s;
}

void axpy(float a, const float* x, float* y, std::size_t n) {
  float32x4_t va = vdupq_n_f32(a);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    // separate mul and add so results match the scalar kernel bit-for-bit
    float32x4_t p = vmulq_f32(va, vld1q_f32(x + k));
    vst1q_f32(y + k, vaddq_f32(vld1q_f32(y + k), p));
  }
  for (; k < n; ++k) y[k] += a * x[k];
}

float sum_abs(const float* x, std::size_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) acc = vaddq_f32(acc, vabsq_f32(vld1q_f32(x + k)));
  float out = vaddvq_f32(acc);
  for (; k < n; ++k) out += std::fabs(x[k]);
  return out;
}

std::pair<float, float> minmax(const float* x, std::size_t n) {
  float lo = x[0], hi = x[0];
  std::size_t k = 0;
  if (n >= 4) {
    float32x4_t vlo = vld1q_f32(x);
    float32x4_t vhi = vlo;
    for (k = 4; k + 4 <= n; k += 4) {
      float32x4_t v = vld1q_f32(x + k);
      vlo = vminq_f32(vlo, v);
      vhi = vmaxq_f32(vhi, v);
    }
    lo = vminvq_f32(vlo);
    hi = vmaxvq_f32(vhi);
  }
  for (; k < n; ++k) {
    lo = x[k] < lo ? x[k] : lo;
    hi = x[k] > hi ? x[k] : hi;
  }
  return {lo, hi};
}

void dequantize_u8(const std::uint8_t* in, float* out, float min, float step,
                   std::size_t n) {
  float32x4_t vmin = vdupq_n_f32(min);
  float32x4_t vstep = vdupq_n_f32(step);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    uint8x8_t bytes = vld1_u8(in + k);
    uint16x8_t wide = vmovl_u8(bytes);
    uint32x4_t lo = vmovl_u16(vget_low_u16(wide));
    uint32x4_t hi = vmovl_u16(vget_high_u16(wide));
    vst1q_f32(out + k, vaddq_f32(vmin, vmulq_f32(vcvtq_f32_u32(lo), vstep)));
    vst1q_f32(out + k + 4,
              vaddq_f32(vmin, vmulq_f32(vcvtq_f32_u32(hi), vstep)));
  }
  for (; k < n; ++k) out[k] = min + static_cast<float>(in[k]) * step;
}

}  // namespace rcomm::kernels::neon

#endif
