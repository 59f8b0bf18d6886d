#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>

// Data-parallel inner loops used by the codec and the collectives.
// Scalar reference implementations always exist; an AVX2 (x86) or NEON
// (aarch64) variant is selected at process start when the CPU supports it.
// The reduction kernels (sum_abs) may reassociate and are only required to
// agree with the scalar reference up to rounding; everything else is
// bit-identical across backends.
namespace rcomm::kernels {

enum class Backend { scalar, avx2, neon };

Backend active_backend();

// Test hook. Throws if the requested backend is not available on this CPU.
void force_backend(Backend b);

const char* backend_name(Backend b);

// acc[k] += x[k]
void add(float* acc, const float* x, std::size_t n);

// acc[k] += (double)x[k], for deterministic reduction trees
void add_f64(double* acc, const float* x, std::size_t n);

// x[k] *= s
void scale(float* x, float s, std::size_t n);

// y[k] += a * x[k]
void axpy(float a, const float* x, float* y, std::size_t n);

float sum_abs(const float* x, std::size_t n);

// (min, max); n must be > 0
std::pair<float, float> minmax(const float* x, std::size_t n);

// out[k] = clamp(nearbyint((x[k] - min) * inv_step), 0, 255)
// Rounds to nearest-even, matching the SIMD cvtps semantics.
void quantize_u8(const float* x, std::uint8_t* out, float min, float inv_step,
                 std::size_t n);

// out[k] = min + in[k] * step
void dequantize_u8(const std::uint8_t* in, float* out, float min, float step,
                   std::size_t n);

// bit k of bits = 1 iff x[k] >= 0; little-endian bit order within each byte.
// The trailing byte's unused high bits are zero.
void sign_pack(const float* x, std::uint8_t* bits, std::size_t n);

// out[k] = bit k set ? +scale : -scale
void sign_unpack(const std::uint8_t* bits, float scale, float* out,
                 std::size_t n);

}  // namespace rcomm::kernels
