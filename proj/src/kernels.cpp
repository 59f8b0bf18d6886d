#include "rcomm/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace rcomm::kernels {

namespace scalar {

void add(float* acc, const float* x, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) acc[k] += x[k];
}

void add_f64(double* acc, const float* x, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) acc[k] += static_cast<double>(x[k]);
}

void scale(float* x, float s, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) x[k] *= s;
}

void axpy(float a, const float* x, float* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += a * x[k];
}

float sum_abs(const float* x, std::size_t n) {
  // double accumulation: the onebit wire scale derives from this sum and
  // must match the true mean magnitude to float precision
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::fabs(static_cast<double>(x[k]));
  return static_cast<float>(s);
}

std::pair<float, float> minmax(const float* x, std::size_t n) {
  float lo = x[0], hi = x[0];
  for (std::size_t k = 1; k < n; ++k) {
    lo = x[k] < lo ? x[k] : lo;
    hi = x[k] > hi ? x[k] : hi;
  }
  return {lo, hi};
}

void quantize_u8(const float* x, std::uint8_t* out, float min, float inv_step,
                 std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    float q = std::nearbyintf((x[k] - min) * inv_step);
    q = q < 0.0f ? 0.0f : (q > 255.0f ? 255.0f : q);
    out[k] = static_cast<std::uint8_t>(q);
  }
}

void dequantize_u8(const std::uint8_t* in, float* out, float min, float step,
                   std::size_t n) {
  for (std::size_t k = 0; k < n; ++k)
    out[k] = min + static_cast<float>(in[k]) * step;
}

void sign_pack(const float* x, std::uint8_t* bits, std::size_t n) {
  std::size_t nbytes = (n + 7) / 8;
  for (std::size_t b = 0; b < nbytes; ++b) bits[b] = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (!std::signbit(x[k])) bits[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
}

void sign_unpack(const std::uint8_t* bits, float scale, float* out,
                 std::size_t n) {
  for (std::size_t k = 0; k < n; ++k)
    out[k] = (bits[k / 8] >> (k % 8)) & 1u ? scale : -scale;
}

}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define RCOMM_HAVE_AVX2_BUILD 1
namespace avx2 {
void add(float* acc, const float* x, std::size_t n);
void scale(float* x, float s, std::size_t n);
void axpy(float a, const float* x, float* y, std::size_t n);
float sum_abs(const float* x, std::size_t n);
std::pair<float, float> minmax(const float* x, std::size_t n);
void quantize_u8(const float* x, std::uint8_t* out, float min, float inv_step,
                 std::size_t n);
void dequantize_u8(const std::uint8_t* in, float* out, float min, float step,
                   std::size_t n);
void sign_pack(const float* x, std::uint8_t* bits, std::size_t n);
}  // namespace avx2
#endif

#if defined(__aarch64__)
#define RCOMM_HAVE_NEON_BUILD 1
namespace neon {
void add(float* acc, const float* x, std::size_t n);
void scale(float* x, float s, std::size_t n);
void axpy(float a, const float* x, float* y, std::size_t n);
float sum_abs(const float* x, std::size_t n);
std::pair<float, float> minmax(const float* x, std::size_t n);
void dequantize_u8(const std::uint8_t* in, float* out, float min, float step,
                   std::size_t n);
}  // namespace neon
#endif

namespace {

struct Table {
  Backend backend;
  void (*add)(float*, const float*, std::size_t);
  void (*scale)(float*, float, std::size_t);
  void (*axpy)(float, const float*, float*, std::size_t);
  float (*sum_abs)(const float*, std::size_t);
  std::pair<float, float> (*minmax)(const float*, std::size_t);
  void (*quantize_u8)(const float*, std::uint8_t*, float, float, std::size_t);
  void (*dequantize_u8)(const std::uint8_t*, float*, float, float, std::size_t);
  void (*sign_pack)(const float*, std::uint8_t*, std::size_t);
};

constexpr Table kScalar{Backend::scalar,
                        scalar::add,
                        scalar::scale,
                        scalar::axpy,
                        scalar::sum_abs,
                        scalar::minmax,
                        scalar::quantize_u8,
                        scalar::dequantize_u8,
                        scalar::sign_pack};

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(RCOMM_HAVE_AVX2_BUILD)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Backend::neon:
#if defined(RCOMM_HAVE_NEON_BUILD)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Table make_table(Backend b) {
  Table t = kScalar;
  t.backend = b;
#if defined(RCOMM_HAVE_AVX2_BUILD)
  if (b == Backend::avx2) {
    t.add = avx2::add;
    t.scale = avx2::scale;
    t.axpy = avx2::axpy;
    t.sum_abs = avx2::sum_abs;
    t.minmax = avx2::minmax;
    t.quantize_u8 = avx2::quantize_u8;
    t.dequantize_u8 = avx2::dequantize_u8;
    t.sign_pack = avx2::sign_pack;
  }
#endif
#if defined(RCOMM_HAVE_NEON_BUILD)
  if (b == Backend::neon) {
    t.add = neon::add;
    t.scale = neon::scale;
    t.axpy = neon::axpy;
    t.sum_abs = neon::sum_abs;
    t.minmax = neon::minmax;
    t.dequantize_u8 = neon::dequantize_u8;
  }
#endif
  return t;
}

Table detect() {
  if (backend_available(Backend::avx2)) return make_table(Backend::avx2);
  if (backend_available(Backend::neon)) return make_table(Backend::neon);
  return kScalar;
}

Table g_table = detect();

}  // namespace

Backend active_backend() { return g_table.backend; }

void force_backend(Backend b) {
  if (!backend_available(b))
    throw std::runtime_error(std::string("kernel backend not available: ") +
                             backend_name(b));
  g_table = make_table(b);
}

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "?";
}

void add(float* acc, const float* x, std::size_t n) { g_table.add(acc, x, n); }

void add_f64(double* acc, const float* x, std::size_t n) {
  // No SIMD variant; float->double widening adds are not a bottleneck here.
  scalar::add_f64(acc, x, n);
}

void scale(float* x, float s, std::size_t n) { g_table.scale(x, s, n); }

void axpy(float a, const float* x, float* y, std::size_t n) {
  g_table.axpy(a, x, y, n);
}

float sum_abs(const float* x, std::size_t n) { return g_table.sum_abs(x, n); }

std::pair<float, float> minmax(const float* x, std::size_t n) {
  return g_table.minmax(x, n);
}

void quantize_u8(const float* x, std::uint8_t* out, float min, float inv_step,
                 std::size_t n) {
  g_table.quantize_u8(x, out, min, inv_step, n);
}

void dequantize_u8(const std::uint8_t* in, float* out, float min, float step,
                   std::size_t n) {
  g_table.dequantize_u8(in, out, min, step, n);
}

void sign_pack(const float* x, std::uint8_t* bits, std::size_t n) {
  g_table.sign_pack(x, bits, n);
}

void sign_unpack(const std::uint8_t* bits, float scale, float* out,
                 std::size_t n) {
  scalar::sign_unpack(bits, scale, out, n);
}

}  // namespace rcomm::kernels
