#include "rcomm/codec.hpp"

#include <cmath>
#include <cstring>

#include "rcomm/kernels.hpp"

namespace rcomm {

namespace {

void put_f32(Payload& out, float v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

float get_f32(const std::uint8_t* p) {
  float v;
  std::memcpy(&v, p, 4);
  return v;
}

void check_finite(std::span<const float> x) {
  for (float v : x)
    if (!std::isfinite(v)) throw Error("encode: non-finite input value");
}

}  // namespace

std::size_t Codec::payload_size(std::size_t n) const {
  switch (kind) {
    case CodecKind::identity: return 4 * n;
    case CodecKind::uniform8: return 8 + n;
    case CodecKind::onebit: return 4 + (n + 7) / 8;
  }
  return 0;
}

Payload Codec::encode(std::span<const float> x, std::mt19937* rng) const {
  check_finite(x);
  const std::size_t n = x.size();
  Payload out;
  out.reserve(payload_size(n));
  switch (kind) {
    case CodecKind::identity: {
      out.resize(4 * n);
      if (n) std::memcpy(out.data(), x.data(), 4 * n);
      break;
    }
    case CodecKind::uniform8: {
      float lo = 0.0f, hi = 0.0f;
      if (n) {
        auto [mn, mx] = kernels::minmax(x.data(), n);
        lo = mn;
        hi = mx;
      }
      put_f32(out, lo);
      put_f32(out, hi);
      out.resize(8 + n);
      const float range = hi - lo;
      if (range == 0.0f) {
        // degenerate range: every element is the constant lo
        std::memset(out.data() + 8, 0, n);
      } else if (rounding == Rounding::nearest) {
        kernels::quantize_u8(x.data(), out.data() + 8, lo, 255.0f / range, n);
      } else {
        if (!rng) throw Error("uniform8 stochastic rounding needs a generator");
        const float inv_step = 255.0f / range;
        std::uniform_real_distribution<float> u(0.0f, 1.0f);
        for (std::size_t k = 0; k < n; ++k) {
          float q = (x[k] - lo) * inv_step;
          float fl = std::floor(q);
          float level = fl + (u(*rng) < q - fl ? 1.0f : 0.0f);
          level = level < 0.0f ? 0.0f : (level > 255.0f ? 255.0f : level);
          out[8 + k] = static_cast<std::uint8_t>(level);
        }
      }
      break;
    }
    case CodecKind::onebit: {
      float scale = n ? kernels::sum_abs(x.data(), n) / static_cast<float>(n)
                      : 0.0f;
      put_f32(out, scale);
      out.resize(4 + (n + 7) / 8);
      if (n) kernels::sign_pack(x.data(), out.data() + 4, n);
      break;
    }
  }
  return out;
}

void Codec::decode(std::span<const std::uint8_t> payload,
                   std::span<float> out) const {
  const std::size_t n = out.size();
  if (payload.size() != payload_size(n))
    throw Error("decode: malformed payload (length mismatch)");
  switch (kind) {
    case CodecKind::identity: {
      if (n) std::memcpy(out.data(), payload.data(), 4 * n);
      break;
    }
    case CodecKind::uniform8: {
      const float lo = get_f32(payload.data());
      const float hi = get_f32(payload.data() + 4);
      const float step = (hi - lo) / 255.0f;
      kernels::dequantize_u8(payload.data() + 8, out.data(), lo, step, n);
      break;
    }
    case CodecKind::onebit: {
      const float scale = get_f32(payload.data());
      if (n) kernels::sign_unpack(payload.data() + 4, scale, out.data(), n);
      break;
    }
  }
}

std::vector<float> Codec::decode(std::span<const std::uint8_t> payload,
                                 std::size_t n) const {
  std::vector<float> out(n);
  decode(payload, out);
  return out;
}

Payload compensate_encode(const Codec& codec, std::span<const float> x,
                          std::span<float> delta, std::mt19937* rng,
                          std::vector<float>* decoded) {
  const std::size_t n = x.size();
  if (delta.size() != n) throw Error("compensate_encode: length mismatch");
  std::vector<float> y(n);
  for (std::size_t k = 0; k < n; ++k) y[k] = x[k] - delta[k];
  Payload payload = codec.encode(y, rng);
  std::vector<float> d = codec.decode(payload, n);
  for (std::size_t k = 0; k < n; ++k) delta[k] = y[k] - d[k];
  if (decoded) *decoded = std::move(d);
  return payload;
}

}  // namespace rcomm
