#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>

namespace rcomm::kernels::avx2 {

void add(float* acc, const float* x, std::size_t n) {
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    __m256 a = _mm256_loadu_ps(acc + k);
    __m256 b = _mm256_loadu_ps(x + k);
    _mm256_storeu_ps(acc + k, _mm256_add_ps(a, b));
  }
  for (; k < n; ++k) acc[k] += x[k];
}

void scale(float* x, float s, std::size_t n) {
  __m256 vs = _mm256_set1_ps(s);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8)
    _mm256_storeu_ps(x + k, _mm256_mul_ps(_mm256_loadu_ps(x + k), vs));
  for (; k < n; ++k) x[k] *= s;
}

void axpy(float a, const float* x, float* y, std::size_t n) {
  __m256 va = _mm256_set1_ps(a);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    __m256 vy = _mm256_loadu_ps(y + k);
    __m256 vx = _mm256_loadu_ps(x + k);
    // mul+add, not fma: keeps results bit-identical to the scalar kernel
    _mm256_storeu_ps(y + k, _mm256_add_ps(vy, _mm256_mul_ps(va, vx)));
  }
  for (; k < n; ++k) y[k] += a * x[k];
}

float sum_abs(const float* x, std::size_t n) {
  // accumulate in double lanes so the reduction keeps float precision
  const __m256 absmask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
  __m256d acc = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    __m256 v = _mm256_and_ps(_mm256_loadu_ps(x + k), absmask);
    acc = _mm256_add_pd(acc, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    acc = _mm256_add_pd(acc, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  __m128d lo = _mm256_castpd256_pd128(acc);
  __m128d hi = _mm256_extractf128_pd(acc, 1);
  __m128d s = _mm_add_pd(lo, hi);
  s = _mm_add_sd(s, _mm_unpackhi_pd(s, s));
  double out = _mm_cvtsd_f64(s);
  for (; k < n; ++k) out += std::fabs(static_cast<double>(x[k]));
  return static_cast<float>(out);
}

std::pair<float, float> minmax(const float* x, std::size_t n) {
  float lo = x[0], hi = x[0];
  std::size_t k = 0;
  if (n >= 8) {
    __m256 vlo = _mm256_loadu_ps(x);
    __m256 vhi = vlo;
    for (k = 8; k + 8 <= n; k += 8) {
      __m256 v = _mm256_loadu_ps(x + k);
      vlo = _mm256_min_ps(vlo, v);
      vhi = _mm256_max_ps(vhi, v);
    }
    alignas(32) float tlo[8], thi[8];
    _mm256_store_ps(tlo, vlo);
    _mm256_store_ps(thi, vhi);
    lo = tlo[0];
    hi = thi[0];
    for (int i = 1; i < 8; ++i) {
      lo = tlo[i] < lo ? tlo[i] : lo;
      hi = thi[i] > hi ? thi[i] : hi;
    }
  }
  for (; k < n; ++k) {
    lo = x[k] < lo ? x[k] : lo;
    hi = x[k] > hi ? x[k] : hi;
  }
  return {lo, hi};
}

void quantize_u8(const float* x, std::uint8_t* out, float min, float inv_step,
                 std::size_t n) {
  const __m256 vmin = _mm256_set1_ps(min);
  const __m256 vinv = _mm256_set1_ps(inv_step);
  const __m256i vzero = _mm256_setzero_si256();
  const __m256i v255 = _mm256_set1_epi32(255);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    __m256 q = _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(x + k), vmin), vinv);
    // cvtps rounds to nearest-even, matching nearbyintf in the scalar kernel
    __m256i qi = _mm256_cvtps_epi32(q);
    qi = _mm256_max_epi32(qi, vzero);
    qi = _mm256_min_epi32(qi, v255);
    alignas(32) std::int32_t t[8];
    _mm256_store_si256(reinterpret_cast<__m256i*>(t), qi);
    for (int i = 0; i < 8; ++i) out[k + i] = static_cast<std::uint8_t>(t[i]);
  }
  for (; k < n; ++k) {
    float q = std::nearbyintf((x[k] - min) * inv_step);
    q = q < 0.0f ? 0.0f : (q > 255.0f ? 255.0f : q);
    out[k] = static_cast<std::uint8_t>(q);
  }
}

void dequantize_u8(const std::uint8_t* in, float* out, float min, float step,
                   std::size_t n) {
  const __m256 vmin = _mm256_set1_ps(min);
  const __m256 vstep = _mm256_set1_ps(step);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    __m128i bytes = _mm_loadl_epi64(reinterpret_cast<const __m128i*>(in + k));
    __m256i wide = _mm256_cvtepu8_epi32(bytes);
    __m256 v = _mm256_cvtepi32_ps(wide);
    _mm256_storeu_ps(out + k, _mm256_add_ps(vmin, _mm256_mul_ps(v, vstep)));
  }
  for (; k < n; ++k) out[k] = min + static_cast<float>(in[k]) * step;
}

void sign_pack(const float* x, std::uint8_t* bits, std::size_t n) {
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    // movemask reads the sign bit: 1 = negative, so invert for 1 = positive
    int neg = _mm256_movemask_ps(_mm256_loadu_ps(x + k));
    bits[k / 8] = static_cast<std::uint8_t>(~neg & 0xff);
  }
  if (k < n) {
    std::uint8_t last = 0;
    for (std::size_t i = k; i < n; ++i)
      if (!std::signbit(x[i])) last |= static_cast<std::uint8_t>(1u << (i - k));
    bits[k / 8] = last;
  }
}

}  // namespace rcomm::kernels::avx2

#endif
