#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <random>
#include <thread>

#include "rcomm/collectives.hpp"

using namespace rcomm;

namespace {

NetworkProfile fast_profile() {
  NetworkProfile p;
  p.intra_node = {0.0, 1e12};
  p.inter_node = {0.0, 1e12};
  return p;
}

// Runs fn(endpoint, rank) on n threads; assertions happen on the caller's
// thread, workers only record results.
template <typename F>
void run_workers(SimCluster& cluster, int n, F fn) {
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r)
    threads.emplace_back([&, r] {
      try {
        fn(cluster.endpoint(r), r);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
        cluster.close();
      }
    });
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<float> random_vec(std::size_t len, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::vector<float> v(len);
  for (auto& x : v) x = gauss(rng);
  return v;
}

bool bitwise_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), 4 * a.size()) == 0);
}

// Reference: per element, fold the per-rank values in ascending rank order
// through a double accumulator, round to float once.
std::vector<float> ordered_sum(const std::vector<std::vector<float>>& xs) {
  std::vector<float> out(xs[0].size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    double acc = 0.0;
    for (const auto& x : xs) acc += static_cast<double>(x[k]);
    out[k] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace

TEST_CASE("partition tiling covers the vector with the remainder in front") {
  CHECK(partition_range(10, 3, 0) == std::pair<std::size_t, std::size_t>{0, 4});
  CHECK(partition_range(10, 3, 1) == std::pair<std::size_t, std::size_t>{4, 3});
  CHECK(partition_range(10, 3, 2) == std::pair<std::size_t, std::size_t>{7, 3});
  CHECK(partition_range(2, 3, 2) == std::pair<std::size_t, std::size_t>{2, 0});
  CHECK(owned_partition_len(7, 4, 0) == 2);
  CHECK(owned_partition_len(7, 4, 3) == 1);
}

TEST_CASE("global sum matches the rank-ordered fold bitwise") {
  for (int n : {1, 2, 3, 8}) {
    for (std::size_t len : {std::size_t{1}, std::size_t{7}, std::size_t{1000}}) {
      std::vector<std::vector<float>> inputs;
      for (int r = 0; r < n; ++r)
        inputs.push_back(random_vec(len, 100u * static_cast<unsigned>(n) +
                                             static_cast<unsigned>(r)));
      const std::vector<float> expect = ordered_sum(inputs);

      SimCluster cluster(n, fast_profile());
      std::vector<std::vector<float>> outs = inputs;
      run_workers(cluster, n,
                  [&](Endpoint& ep, int r) { c_fp_s(ep, 0.0, outs[r]); });
      for (int r = 0; r < n; ++r) CHECK(bitwise_equal(outs[r], expect));
    }
  }
}

TEST_CASE("each worker sends 2(n-1) messages per global sum") {
  const int n = 4;
  SimCluster cluster(n, fast_profile());
  std::vector<std::vector<float>> xs(n, random_vec(64, 5));
  run_workers(cluster, n, [&](Endpoint& ep, int r) { c_fp_s(ep, 0.0, xs[r]); });
  for (int r = 0; r < n; ++r)
    CHECK(cluster.endpoint(r).messages_sent() == 2 * (n - 1));
}

TEST_CASE("identity codec collapses every primitive to full precision") {
  const int n = 4;
  const std::size_t len = 37;
  const Codec id{CodecKind::identity};
  std::mt19937 trial_seed(42);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<float>> inputs;
    for (int r = 0; r < n; ++r)
      inputs.push_back(random_vec(len, trial_seed()));

    std::vector<std::vector<float>> fp = inputs, lp = inputs, lp_ec = inputs,
                                    hier = inputs;
    {
      SimCluster cluster(n, fast_profile());
      run_workers(cluster, n,
                  [&](Endpoint& ep, int r) { c_fp_s(ep, 0.0, fp[r]); });
    }
    {
      SimCluster cluster(n, fast_profile());
      run_workers(cluster, n, [&](Endpoint& ep, int r) {
        c_lp_s(ep, 0.0, lp[r], id, nullptr);
      });
    }
    {
      SimCluster cluster(n, fast_profile());
      run_workers(cluster, n, [&](Endpoint& ep, int r) {
        ErrorState es(len, owned_partition_len(len, n, r));
        c_lp_s(ep, 0.0, lp_ec[r], id, &es);
        // identity leaves nothing behind
        for (float d : es.delta)
          if (d != 0.0f) throw Error("identity left a nonzero delta");
      });
    }
    {
      SimCluster cluster(n, fast_profile(), {0, 0, 1, 1});
      run_workers(cluster, n, [&](Endpoint& ep, int r) {
        hierarchical_c(ep, 0.0, hier[r], id, nullptr);
      });
    }
    for (int r = 0; r < n; ++r) {
      CHECK(bitwise_equal(lp[r], fp[r]));
      CHECK(bitwise_equal(lp_ec[r], fp[r]));
      CHECK(bitwise_equal(hier[r], fp[r]));
    }

    // decentralized: identity d_lp_s equals d_fp_s on a ring
    Topology ring{TopologyKind::ring, n, 0};
    std::vector<std::vector<float>> dfp = inputs, dlp = inputs;
    {
      SimCluster cluster(n, fast_profile());
      run_workers(cluster, n, [&](Endpoint& ep, int r) {
        d_fp_s(ep, 0.0, dfp[r], ring, trial, ReduceMode::average);
      });
    }
    {
      SimCluster cluster(n, fast_profile());
      run_workers(cluster, n, [&](Endpoint& ep, int r) {
        d_lp_s(ep, 0.0, dlp[r], ring, trial, id, ReduceMode::average);
      });
    }
    for (int r = 0; r < n; ++r) CHECK(bitwise_equal(dlp[r], dfp[r]));
  }
}

TEST_CASE("ring neighborhood averaging on alternating values") {
  const int n = 4;
  Topology ring{TopologyKind::ring, n, 0};
  SimCluster cluster(n, fast_profile());
  std::vector<std::vector<float>> xs = {{0.0f}, {4.0f}, {0.0f}, {4.0f}};
  run_workers(cluster, n, [&](Endpoint& ep, int r) {
    d_fp_s(ep, 0.0, xs[r], ring, 0, ReduceMode::average);
  });
  CHECK(xs[0][0] == doctest::Approx(8.0 / 3.0));
  CHECK(xs[1][0] == doctest::Approx(4.0 / 3.0));
  CHECK(xs[2][0] == doctest::Approx(8.0 / 3.0));
  CHECK(xs[3][0] == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("topology neighbor sets") {
  Topology ring{TopologyKind::ring, 4, 0};
  CHECK(ring.neighbors(0, 0) == std::vector<int>{0, 1, 3});
  CHECK(ring.neighbors(2, 7) == std::vector<int>{1, 2, 3});
  Topology pair{TopologyKind::ring, 2, 0};
  CHECK(pair.neighbors(0, 0) == std::vector<int>{0, 1});
  Topology solo{TopologyKind::ring, 1, 0};
  CHECK(solo.neighbors(0, 0) == std::vector<int>{0});
  Topology full{TopologyKind::full, 3, 0};
  CHECK(full.neighbors(1, 5) == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(ring.neighbors(4, 0), Error);

  // random matching: shared across ranks, symmetric, self-inclusive
  Topology rnd{TopologyKind::random, 8, 123};
  for (std::uint64_t round = 0; round < 20; ++round) {
    for (int r = 0; r < 8; ++r) {
      auto nbrs = rnd.neighbors(r, round);
      CHECK(nbrs.size() == 2);  // even n: everyone is matched
      CHECK(std::find(nbrs.begin(), nbrs.end(), r) != nbrs.end());
      for (int p : nbrs) {
        auto back = rnd.neighbors(p, round);
        CHECK(std::find(back.begin(), back.end(), r) != back.end());
      }
    }
  }
}

TEST_CASE("single-worker sign compression trace with error feedback") {
  SimCluster cluster(1, fast_profile());
  std::vector<float> x = {0.3f, -0.1f};
  ErrorState es(2, 2);
  Codec ob{CodecKind::onebit};
  run_workers(cluster, 1, [&](Endpoint& ep, int) {
    c_lp_s(ep, 0.0, x, ob, &es);
  });
  // scale = mean(|0.3|, |0.1|) = 0.2 both rounds
  CHECK(x[0] == doctest::Approx(0.2));
  CHECK(x[1] == doctest::Approx(-0.2));
  CHECK(es.delta[0] == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(es.delta[1] == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(es.epsilon[0] == doctest::Approx(0.0));
  CHECK(es.epsilon[1] == doctest::Approx(0.0));
}

TEST_CASE("error-state length validation") {
  SimCluster cluster(2, fast_profile());
  Codec ob{CodecKind::onebit};
  CHECK_THROWS_AS(run_workers(cluster, 2,
                              [&](Endpoint& ep, int) {
                                std::vector<float> x(10, 1.0f);
                                ErrorState bad(3, 1);  // delta too short
                                c_lp_s(ep, 0.0, x, ob, &bad);
                              }),
                  Error);
}

TEST_CASE("hierarchical lossless equals the flat primitive bitwise") {
  const int n = 6;
  const std::size_t len = 101;
  std::vector<std::vector<float>> inputs;
  for (int r = 0; r < n; ++r)
    inputs.push_back(random_vec(len, 900u + static_cast<unsigned>(r)));
  std::vector<std::vector<float>> flat = inputs, hier = inputs;
  {
    SimCluster cluster(n, fast_profile());
    run_workers(cluster, n,
                [&](Endpoint& ep, int r) { c_fp_s(ep, 0.0, flat[r]); });
  }
  {
    SimCluster cluster(n, fast_profile(), {0, 0, 0, 1, 1, 2});
    run_workers(cluster, n, [&](Endpoint& ep, int r) {
      hierarchical_c(ep, 0.0, hier[r], Codec{CodecKind::identity}, nullptr);
    });
  }
  for (int r = 0; r < n; ++r) CHECK(bitwise_equal(hier[r], flat[r]));
}

TEST_CASE("lossy aggregates leave every replica identical and bounded") {
  const int n = 4;
  const std::size_t len = 50;
  std::vector<std::vector<float>> inputs;
  for (int r = 0; r < n; ++r)
    inputs.push_back(random_vec(len, 70u + static_cast<unsigned>(r)));
  std::vector<float> exact = ordered_sum(inputs);

  std::vector<std::vector<float>> outs = inputs;
  Codec q8{CodecKind::uniform8};
  {
    SimCluster cluster(n, fast_profile(), {0, 0, 1, 1});
    run_workers(cluster, n, [&](Endpoint& ep, int r) {
      hierarchical_c(ep, 0.0, outs[r], q8, nullptr);
    });
  }
  for (int r = 1; r < n; ++r) CHECK(bitwise_equal(outs[r], outs[0]));
  // each of the two quantization passes errs by at most one level span
  float worst = 0.0f;
  for (std::size_t k = 0; k < len; ++k)
    worst = std::max(worst, std::abs(outs[0][k] - exact[k]));
  CHECK(worst < 1.0f);
}

TEST_CASE("decentralized sum mode and size mismatch validation") {
  const int n = 3;
  Topology full{TopologyKind::full, n, 0};
  SimCluster cluster(n, fast_profile());
  std::vector<std::vector<float>> xs = {{1.0f}, {2.0f}, {3.0f}};
  run_workers(cluster, n, [&](Endpoint& ep, int r) {
    d_fp_s(ep, 0.0, xs[r], full, 0, ReduceMode::sum);
  });
  for (int r = 0; r < n; ++r) CHECK(xs[r][0] == doctest::Approx(6.0));

  Topology wrong{TopologyKind::full, 5, 0};
  std::vector<float> v(4, 0.0f);
  CHECK_THROWS_AS(d_fp_s(cluster.endpoint(0), 0.0, v, wrong, 0,
                         ReduceMode::sum),
                  Error);
}
