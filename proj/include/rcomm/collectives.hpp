#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rcomm/codec.hpp"
#include "rcomm/transport.hpp"

namespace rcomm {

enum class TopologyKind { ring, random, full };

// Neighbor function N(i); always self-inclusive. The random strategy pairs
// workers via a matching drawn from a shared per-round seed so every worker
// agrees on the assignment without an extra coordination round.
struct Topology {
  TopologyKind kind = TopologyKind::full;
  int n = 1;
  std::uint64_t seed = 0;

  // Sorted, includes `rank` itself.
  std::vector<int> neighbors(int rank, std::uint64_t round) const;
};

enum class ReduceMode { sum, average };

// Collective round tags: tag = bucket_id * 16 + phase.
namespace phase {
constexpr std::uint32_t scatter = 0;  // chunks to partition owners
constexpr std::uint32_t gather = 1;   // intra-node upload to the leader
constexpr std::uint32_t inter = 2;    // leader result down to node members
constexpr std::uint32_t bcast = 3;    // owner partition broadcast
constexpr std::uint32_t make_tag(std::uint32_t bucket, std::uint32_t ph) {
  return bucket * 16 + ph;
}
}  // namespace phase

// k-th of n partitions tiling [0, len); the first (len mod n) partitions
// get one extra element.
std::pair<std::size_t, std::size_t> partition_range(std::size_t len, int n,
                                                    int k);

// All primitives are blocking rendezvous collectives. They take the calling
// context's virtual clock and return the advanced clock; `x` is updated in
// place. Partition sums are accumulated in double and rounded to float once,
// in ascending rank order, so the reduction is a fixed deterministic tree.

// Allreduce-equivalent: every worker ends with sum_j x_j.
double c_fp_s(Endpoint& ep, double now, std::span<float> x,
              std::uint32_t bucket = 0);

// Compressed ScatterReduce with two phases of compression. With `es`
// non-null, applies error compensation: sends Q(x_i - delta_i), partition
// owners subtract their epsilon before the second Q, and both residuals are
// updated to the exact encode/decode remainder. With es == nullptr computes
// Q(sum_j Q(x_j)) statelessly.
double c_lp_s(Endpoint& ep, double now, std::span<float> x, const Codec& codec,
              ErrorState* es, std::mt19937* rng = nullptr,
              std::uint32_t bucket = 0);

// Neighborhood sum (or average over |N(i)|) per the topology.
double d_fp_s(Endpoint& ep, double now, std::span<float> x,
              const Topology& topo, std::uint64_t round, ReduceMode mode,
              std::uint32_t bucket = 0);

// As d_fp_s but every contribution, the self term included, passes through Q.
double d_lp_s(Endpoint& ep, double now, std::span<float> x,
              const Topology& topo, std::uint64_t round, const Codec& codec,
              ReduceMode mode, std::mt19937* rng = nullptr,
              std::uint32_t bucket = 0);

// Hierarchical centralized aggregate: intra-node reduction to the node
// leader (lowest rank) without compression, inter-node ScatterReduce among
// leaders through the codec, then leaders broadcast within their nodes.
// With a lossless codec the inter-node exchange keeps the double-precision
// partials so the result is bit-identical to the flat primitive. A single
// node degenerates to the intra-node aggregate with no compression.
double hierarchical_c(Endpoint& ep, double now, std::span<float> x,
                      const Codec& codec, ErrorState* es,
                      std::mt19937* rng = nullptr, std::uint32_t bucket = 0);

// Owned-partition length of `rank` for a bucket of `len` elements, used to
// size ErrorState::epsilon. `world` is the participant count (leaders only
// when hierarchical).
std::size_t owned_partition_len(std::size_t len, int world, int idx);

}  // namespace rcomm
