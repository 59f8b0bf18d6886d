#include <cstdio>
#include <cstring>
#include <random>

#include "rcomm/harness.hpp"

namespace rcomm {

Dataset Dataset::generate_logistic(std::size_t n, std::size_t d,
                                   std::uint32_t seed, float noise) {
  if (n == 0 || d == 0) throw Error("dataset: n and d must be positive");
  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.seed = seed;
  std::mt19937 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::uniform_real_distribution<float> unif(0.0f, 1.0f);

  std::vector<float> separator(d);
  for (auto& w : separator) w = gauss(rng);

  ds.features.resize(n * d);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      float x = gauss(rng);
      ds.features[i * d + j] = x;
      dot += static_cast<double>(separator[j]) * x;
    }
    float y = dot >= 0.0 ? 1.0f : -1.0f;
    if (unif(rng) < noise) y = -y;
    ds.labels[i] = y;
  }
  return ds;
}

Dataset Dataset::generate_quadratic(std::size_t n, std::size_t d,
                                    std::uint32_t seed) {
  if (n == 0 || d == 0) throw Error("dataset: n and d must be positive");
  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.seed = seed;
  std::mt19937 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  ds.features.resize(n * d);
  for (auto& a : ds.features) a = gauss(rng);
  ds.labels.assign(n, 0.0f);
  return ds;
}

Dataset Dataset::shard(int n_workers, int rank) const {
  if (n_workers <= 0 || rank < 0 || rank >= n_workers)
    throw Error("shard: bad worker index");
  if (static_cast<std::size_t>(n_workers) > n)
    throw Error("shard: more workers than samples");
  const std::size_t base = n / static_cast<std::size_t>(n_workers);
  const std::size_t extra = n % static_cast<std::size_t>(n_workers);
  const std::size_t r = static_cast<std::size_t>(rank);
  const std::size_t lo = r * base + std::min(r, extra);
  const std::size_t count = base + (r < extra ? 1 : 0);

  Dataset out;
  out.n = count;
  out.d = d;
  out.seed = seed;
  out.features.assign(features.begin() + static_cast<long>(lo * d),
                      features.begin() + static_cast<long>((lo + count) * d));
  out.labels.assign(labels.begin() + static_cast<long>(lo),
                    labels.begin() + static_cast<long>(lo + count));
  return out;
}

void Dataset::dump(const std::string& path) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error("cannot open '" + path + "' for writing");
  std::uint64_t hn = n, hd = d;
  std::fwrite(&hn, 8, 1, f);
  std::fwrite(&hd, 8, 1, f);
  std::fwrite(&seed, 4, 1, f);
  std::fwrite(features.data(), 4, features.size(), f);
  std::fwrite(labels.data(), 4, labels.size(), f);
  std::fclose(f);
}

Dataset Dataset::load(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw Error("cannot open '" + path + "'");
  Dataset ds;
  std::uint64_t hn = 0, hd = 0;
  if (std::fread(&hn, 8, 1, f) != 1 || std::fread(&hd, 8, 1, f) != 1 ||
      std::fread(&ds.seed, 4, 1, f) != 1) {
    std::fclose(f);
    throw Error("dataset file truncated: " + path);
  }
  ds.n = hn;
  ds.d = hd;
  ds.features.resize(ds.n * ds.d);
  ds.labels.resize(ds.n);
  bool ok = std::fread(ds.features.data(), 4, ds.features.size(), f) ==
                ds.features.size() &&
            std::fread(ds.labels.data(), 4, ds.labels.size(), f) ==
                ds.labels.size();
  std::fclose(f);
  if (!ok) throw Error("dataset file truncated: " + path);
  return ds;
}

}  // namespace rcomm
