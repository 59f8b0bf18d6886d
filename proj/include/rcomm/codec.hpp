#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rcomm/tensor.hpp"

namespace rcomm {

enum class CodecKind { identity, uniform8, onebit };
enum class Rounding { nearest, stochastic };

using Payload = std::vector<std::uint8_t>;

// Lossy compression function Q. Immutable and safely shareable; stochastic
// rounding draws from the caller-supplied (per-worker) generator.
//
// Wire layouts (little-endian), element count travels in the message header:
//   identity: [f32 x N]
//   uniform8: [min: f32][max: f32][levels: u8 x N]
//   onebit:   [scale: f32][signbits: ceil(N/8) bytes, LE bit order, 1 = positive]
struct Codec {
  CodecKind kind = CodecKind::identity;
  Rounding rounding = Rounding::nearest;

  bool lossless() const { return kind == CodecKind::identity; }
  std::size_t payload_size(std::size_t n) const;

  Payload encode(std::span<const float> x, std::mt19937* rng = nullptr) const;
  void decode(std::span<const std::uint8_t> payload, std::span<float> out) const;
  std::vector<float> decode(std::span<const std::uint8_t> payload,
                            std::size_t n) const;
};

// Worker-side error delta (bucket length) and server-side error epsilon
// (owned-partition length); all zeros at initialization.
struct ErrorState {
  std::vector<float> delta;
  std::vector<float> epsilon;

  ErrorState() = default;
  ErrorState(std::size_t bucket_len, std::size_t owned_len)
      : delta(bucket_len, 0.0f), epsilon(owned_len, 0.0f) {}
};

// Encodes Q(x - delta) and replaces delta with the exact residual
//   delta' = (x - delta) - decode(Q(x - delta)).
// If `decoded` is non-null it receives decode(Q(x - delta)).
Payload compensate_encode(const Codec& codec, std::span<const float> x,
                          std::span<float> delta, std::mt19937* rng = nullptr,
                          std::vector<float>* decoded = nullptr);

}  // namespace rcomm
