#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rcomm/tensor.hpp"

namespace rcomm {

// Synthetic desk-scale dataset. Deterministic for a given seed; shards are
// contiguous, disjoint and cover the dataset.
struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::uint32_t seed = 0;
  std::vector<float> features;  // n x d, row-major
  std::vector<float> labels;    // n (+-1 for logistic, unused for quadratic)

  const float* row(std::size_t i) const { return features.data() + i * d; }

  // Labels drawn from a hidden separator, flipped with probability `noise`.
  static Dataset generate_logistic(std::size_t n, std::size_t d,
                                   std::uint32_t seed, float noise = 0.05f);
  // Rows are the per-sample targets of the quadratic objective.
  static Dataset generate_quadratic(std::size_t n, std::size_t d,
                                    std::uint32_t seed);

  // Contiguous shard for `rank` of `n_workers`; first (n mod workers)
  // shards get one extra row. Errors when n_workers > n.
  Dataset shard(int n_workers, int rank) const;

  // Flat binary dump: [n:u64][d:u64][seed:u32], features row-major, labels.
  void dump(const std::string& path) const;
  static Dataset load(const std::string& path);
};

struct Batch {
  const Dataset* data = nullptr;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
};

enum class ModelKind { quadratic, logistic, mlp };

// A model is an ordered list of parameter layers with analytic gradients.
// backward() fills every layer's gradient with the mean gradient over the
// batch; the engine walks layers in reverse order when charging compute.
class Model {
 public:
  virtual ~Model() = default;
  virtual std::size_t layer_count() const = 0;
  virtual FlatTensor& params(std::size_t layer) = 0;
  virtual FlatTensor& grads(std::size_t layer) = 0;
  virtual double loss(const Batch& batch) const = 0;
  virtual void backward(const Batch& batch) = 0;

  // Virtual compute cost of one layer's backward, seconds.
  virtual double layer_cost(std::size_t layer) {
    return seconds_per_element_ * static_cast<double>(params(layer).size());
  }
  void set_compute_cost(double seconds_per_element) {
    seconds_per_element_ = seconds_per_element;
  }

  std::size_t param_count() {
    std::size_t total = 0;
    for (std::size_t l = 0; l < layer_count(); ++l) total += params(l).size();
    return total;
  }

 private:
  double seconds_per_element_ = 0.0;
};

// hidden is only used by the mlp; seed fixes the parameter initialization.
std::unique_ptr<Model> make_model(ModelKind kind, std::size_t d,
                                  std::size_t hidden, std::uint32_t seed);

ModelKind model_kind_from_string(const std::string& s);

}  // namespace rcomm
