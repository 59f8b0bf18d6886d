#include "rcomm/collectives.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <numeric>

#include "rcomm/kernels.hpp"

namespace rcomm {

namespace {

std::span<const std::uint8_t> float_bytes(std::span<const float> x) {
  return {reinterpret_cast<const std::uint8_t*>(x.data()), 4 * x.size()};
}

std::span<const std::uint8_t> double_bytes(std::span<const double> x) {
  return {reinterpret_cast<const std::uint8_t*>(x.data()), 8 * x.size()};
}

void bytes_to_floats(const Bytes& b, std::span<float> out) {
  if (b.size() != 4 * out.size())
    throw Error("collective payload size mismatch");
  if (!out.empty()) std::memcpy(out.data(), b.data(), b.size());
}

void bytes_to_doubles(const Bytes& b, std::span<double> out) {
  if (b.size() != 8 * out.size())
    throw Error("collective payload size mismatch");
  if (!out.empty()) std::memcpy(out.data(), b.data(), b.size());
}

int index_in(std::span<const int> group, int rank) {
  auto it = std::find(group.begin(), group.end(), rank);
  if (it == group.end()) throw Error("rank not in collective group");
  return static_cast<int>(it - group.begin());
}

// Full-precision ScatterReduce over an explicit participant group.
// Per-element sums are accumulated in double in ascending group order.
double scatter_reduce_fp(Endpoint& ep, double now, std::span<float> x,
                         std::span<const int> group, std::uint32_t bucket) {
  const int g = static_cast<int>(group.size());
  const int me = index_in(group, ep.rank());
  const std::size_t len = x.size();
  const std::uint32_t t_scatter = phase::make_tag(bucket, phase::scatter);
  const std::uint32_t t_bcast = phase::make_tag(bucket, phase::bcast);
  if (g == 1) return now;

  for (int k = 0; k < g; ++k) {
    if (k == me) continue;
    auto [lo, n] = partition_range(len, g, k);
    now = ep.send(now, group[k], t_scatter, float_bytes(x.subspan(lo, n)));
  }

  auto [mylo, mylen] = partition_range(len, g, me);
  std::vector<double> acc(mylen, 0.0);
  std::vector<float> chunk(mylen);
  for (int j = 0; j < g; ++j) {
    const float* src;
    if (j == me) {
      src = x.data() + mylo;
    } else {
      auto [t, payload] = ep.recv(now, group[j], t_scatter);
      now = t;
      bytes_to_floats(payload, chunk);
      src = chunk.data();
    }
    kernels::add_f64(acc.data(), src, mylen);
  }
  std::vector<float> result(mylen);
  for (std::size_t k = 0; k < mylen; ++k)
    result[k] = static_cast<float>(acc[k]);

  for (int k = 0; k < g; ++k)
    if (k != me) now = ep.send(now, group[k], t_bcast, float_bytes(result));
  std::copy(result.begin(), result.end(), x.begin() + mylo);
  for (int j = 0; j < g; ++j) {
    if (j == me) continue;
    auto [lo, n] = partition_range(len, g, j);
    auto [t, payload] = ep.recv(now, group[j], t_bcast);
    now = t;
    bytes_to_floats(payload, x.subspan(lo, n));
  }
  return now;
}

// Low-precision ScatterReduce with two phases of compression, optionally
// error-compensated. The group==1 case still routes through the codec.
double scatter_reduce_lp(Endpoint& ep, double now, std::span<float> x,
                         std::span<const int> group, const Codec& codec,
                         ErrorState* es, std::mt19937* rng,
                         std::uint32_t bucket) {
  const int g = static_cast<int>(group.size());
  const int me = index_in(group, ep.rank());
  const std::size_t len = x.size();
  const std::uint32_t t_scatter = phase::make_tag(bucket, phase::scatter);
  const std::uint32_t t_bcast = phase::make_tag(bucket, phase::bcast);
  auto [mylo, mylen] = partition_range(len, g, me);

  if (es) {
    if (es->delta.size() != len)
      throw Error("c_lp_s: delta length does not match bucket length");
    if (es->epsilon.size() != mylen)
      throw Error("c_lp_s: epsilon length does not match owned partition");
  }

  // Upload phase: encode Q(x - delta) per partition chunk.
  std::vector<float> zero_delta;
  Payload own_chunk_payload;
  for (int k = 0; k < g; ++k) {
    auto [lo, n] = partition_range(len, g, k);
    Payload p;
    if (es) {
      p = compensate_encode(codec, x.subspan(lo, n),
                            std::span<float>(es->delta).subspan(lo, n), rng);
    } else {
      p = codec.encode(x.subspan(lo, n), rng);
    }
    if (k == me)
      own_chunk_payload = std::move(p);
    else
      now = ep.send(now, group[k], t_scatter, p);
  }

  // Aggregation phase at the partition owner.
  std::vector<double> acc(mylen, 0.0);
  std::vector<float> decoded(mylen);
  for (int j = 0; j < g; ++j) {
    if (j == me) {
      codec.decode(own_chunk_payload, decoded);
    } else {
      auto [t, payload] = ep.recv(now, group[j], t_scatter);
      now = t;
      codec.decode(payload, decoded);
    }
    kernels::add_f64(acc.data(), decoded.data(), mylen);
  }
  std::vector<float> summed(mylen);
  for (std::size_t k = 0; k < mylen; ++k)
    summed[k] = static_cast<float>(acc[k]);

  // Second compression phase, compensated by the owner-side epsilon.
  Payload out_payload;
  if (es) {
    out_payload = compensate_encode(codec, summed, es->epsilon, rng);
  } else {
    out_payload = codec.encode(summed, rng);
  }

  for (int k = 0; k < g; ++k)
    if (k != me) now = ep.send(now, group[k], t_bcast, out_payload);
  codec.decode(out_payload, x.subspan(mylo, mylen));
  for (int j = 0; j < g; ++j) {
    if (j == me) continue;
    auto [lo, n] = partition_range(len, g, j);
    auto [t, payload] = ep.recv(now, group[j], t_bcast);
    now = t;
    codec.decode(payload, x.subspan(lo, n));
  }
  return now;
}

}  // namespace

std::pair<std::size_t, std::size_t> partition_range(std::size_t len, int n,
                                                    int k) {
  const std::size_t base = len / static_cast<std::size_t>(n);
  const std::size_t extra = len % static_cast<std::size_t>(n);
  const std::size_t uk = static_cast<std::size_t>(k);
  const std::size_t lo = uk * base + std::min(uk, extra);
  const std::size_t sz = base + (uk < extra ? 1 : 0);
  return {lo, sz};
}

std::size_t owned_partition_len(std::size_t len, int world, int idx) {
  return partition_range(len, world, idx).second;
}

std::vector<int> Topology::neighbors(int rank, std::uint64_t round) const {
  if (rank < 0 || rank >= n) throw Error("topology: rank out of range");
  std::vector<int> nbrs;
  switch (kind) {
    case TopologyKind::full:
      nbrs.resize(static_cast<std::size_t>(n));
      std::iota(nbrs.begin(), nbrs.end(), 0);
      return nbrs;
    case TopologyKind::ring: {
      nbrs = {(rank + n - 1) % n, rank, (rank + 1) % n};
      std::sort(nbrs.begin(), nbrs.end());
      nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
      return nbrs;
    }
    case TopologyKind::random: {
      // one shared matching per round: shuffle ranks, pair consecutive
      std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (round + 1)));
      std::vector<int> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      int peer = rank;
      for (int i = 0; i + 1 < n; i += 2) {
        if (perm[i] == rank) peer = perm[i + 1];
        if (perm[i + 1] == rank) peer = perm[i];
      }
      nbrs = {rank};
      if (peer != rank) nbrs.push_back(peer);
      std::sort(nbrs.begin(), nbrs.end());
      return nbrs;
    }
  }
  throw Error("topology: unknown kind");
}

double c_fp_s(Endpoint& ep, double now, std::span<float> x,
              std::uint32_t bucket) {
  std::vector<int> group(static_cast<std::size_t>(ep.world_size()));
  std::iota(group.begin(), group.end(), 0);
  return scatter_reduce_fp(ep, now, x, group, bucket);
}

double c_lp_s(Endpoint& ep, double now, std::span<float> x, const Codec& codec,
              ErrorState* es, std::mt19937* rng, std::uint32_t bucket) {
  std::vector<int> group(static_cast<std::size_t>(ep.world_size()));
  std::iota(group.begin(), group.end(), 0);
  return scatter_reduce_lp(ep, now, x, group, codec, es, rng, bucket);
}

double d_fp_s(Endpoint& ep, double now, std::span<float> x,
              const Topology& topo, std::uint64_t round, ReduceMode mode,
              std::uint32_t bucket) {
  if (topo.n != ep.world_size()) throw Error("topology size mismatch");
  const auto nbrs = topo.neighbors(ep.rank(), round);
  const std::uint32_t tag = phase::make_tag(bucket, phase::scatter);
  for (int j : nbrs)
    if (j != ep.rank()) now = ep.send(now, j, tag, float_bytes(x));

  std::vector<double> acc(x.size(), 0.0);
  std::vector<float> incoming(x.size());
  for (int j : nbrs) {
    const float* src;
    if (j == ep.rank()) {
      src = x.data();
    } else {
      auto [t, payload] = ep.recv(now, j, tag);
      now = t;
      bytes_to_floats(payload, incoming);
      src = incoming.data();
    }
    kernels::add_f64(acc.data(), src, x.size());
  }
  const double inv = mode == ReduceMode::average
                         ? 1.0 / static_cast<double>(nbrs.size())
                         : 1.0;
  for (std::size_t k = 0; k < x.size(); ++k)
    x[k] = static_cast<float>(acc[k] * inv);
  return now;
}

double d_lp_s(Endpoint& ep, double now, std::span<float> x,
              const Topology& topo, std::uint64_t round, const Codec& codec,
              ReduceMode mode, std::mt19937* rng, std::uint32_t bucket) {
  if (topo.n != ep.world_size()) throw Error("topology size mismatch");
  const auto nbrs = topo.neighbors(ep.rank(), round);
  const std::uint32_t tag = phase::make_tag(bucket, phase::scatter);
  Payload own = codec.encode(x, rng);
  for (int j : nbrs)
    if (j != ep.rank()) now = ep.send(now, j, tag, own);

  std::vector<double> acc(x.size(), 0.0);
  std::vector<float> decoded(x.size());
  for (int j : nbrs) {
    if (j == ep.rank()) {
      codec.decode(own, decoded);
    } else {
      auto [t, payload] = ep.recv(now, j, tag);
      now = t;
      codec.decode(payload, decoded);
    }
    kernels::add_f64(acc.data(), decoded.data(), x.size());
  }
  const double inv = mode == ReduceMode::average
                         ? 1.0 / static_cast<double>(nbrs.size())
                         : 1.0;
  for (std::size_t k = 0; k < x.size(); ++k)
    x[k] = static_cast<float>(acc[k] * inv);
  return now;
}

double hierarchical_c(Endpoint& ep, double now, std::span<float> x,
                      const Codec& codec, ErrorState* es, std::mt19937* rng,
                      std::uint32_t bucket) {
  const int n = ep.world_size();
  const int me = ep.rank();
  const std::size_t len = x.size();
  const std::uint32_t t_gather = phase::make_tag(bucket, phase::gather);
  const std::uint32_t t_down = phase::make_tag(bucket, phase::inter);

  std::vector<int> members;  // my node's ranks, ascending
  std::vector<int> leaders;  // lowest rank per node, ascending
  {
    std::map<int, std::vector<int>> by_node;
    for (int r = 0; r < n; ++r) by_node[ep.node_of(r)].push_back(r);
    for (auto& [node, ranks] : by_node) {
      if (ranks.empty()) throw Error("hierarchical: empty node group");
      leaders.push_back(ranks.front());
      if (node == ep.node()) members = ranks;
    }
    std::sort(leaders.begin(), leaders.end());
  }
  const int leader = members.front();

  if (me != leader) {
    now = ep.send(now, leader, t_gather, float_bytes(x));
    auto [t, payload] = ep.recv(now, leader, t_down);
    bytes_to_floats(payload, x);
    return t;
  }

  // Intra-node aggregation, uncompressed, in member rank order.
  std::vector<double> acc(len, 0.0);
  std::vector<float> incoming(len);
  for (int j : members) {
    const float* src;
    if (j == me) {
      src = x.data();
    } else {
      auto [t, payload] = ep.recv(now, j, t_gather);
      now = t;
      bytes_to_floats(payload, incoming);
      src = incoming.data();
    }
    kernels::add_f64(acc.data(), src, len);
  }

  const int L = static_cast<int>(leaders.size());
  if (L > 1) {
    if (codec.lossless()) {
      // Keep the double partials on the wire so the result matches the
      // flat primitive bit for bit.
      const int lme = index_in(leaders, me);
      const std::uint32_t t_scatter = phase::make_tag(bucket, phase::scatter);
      const std::uint32_t t_bcast = phase::make_tag(bucket, phase::bcast);
      for (int k = 0; k < L; ++k) {
        if (k == lme) continue;
        auto [lo, m] = partition_range(len, L, k);
        now = ep.send(now, leaders[k], t_scatter,
                      double_bytes(std::span<const double>(acc).subspan(lo, m)));
      }
      auto [mylo, mylen] = partition_range(len, L, lme);
      std::vector<double> part(acc.begin() + static_cast<long>(mylo),
                               acc.begin() + static_cast<long>(mylo + mylen));
      std::vector<double> chunk(mylen);
      for (int j = 0; j < L; ++j) {
        if (j == lme) continue;
        auto [t, payload] = ep.recv(now, leaders[j], t_scatter);
        now = t;
        bytes_to_doubles(payload, chunk);
        for (std::size_t k = 0; k < mylen; ++k) part[k] += chunk[k];
      }
      for (int k = 0; k < L; ++k)
        if (k != lme)
          now = ep.send(now, leaders[k], t_bcast, double_bytes(part));
      std::copy(part.begin(), part.end(), acc.begin() + static_cast<long>(mylo));
      for (int j = 0; j < L; ++j) {
        if (j == lme) continue;
        auto [lo, m] = partition_range(len, L, j);
        auto [t, payload] = ep.recv(now, leaders[j], t_bcast);
        now = t;
        bytes_to_doubles(payload, {acc.data() + lo, m});
      }
      for (std::size_t k = 0; k < len; ++k) x[k] = static_cast<float>(acc[k]);
    } else {
      for (std::size_t k = 0; k < len; ++k) x[k] = static_cast<float>(acc[k]);
      now = scatter_reduce_lp(ep, now, x, leaders, codec, es, rng, bucket);
    }
  } else {
    // single node: intra-node aggregate only, no compression applied
    for (std::size_t k = 0; k < len; ++k) x[k] = static_cast<float>(acc[k]);
  }

  for (int j : members)
    if (j != me) now = ep.send(now, j, t_down, float_bytes(x));
  return now;
}

}  // namespace rcomm
