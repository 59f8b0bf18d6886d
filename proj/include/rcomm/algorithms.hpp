#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>

#include "rcomm/collectives.hpp"
#include "rcomm/engine.hpp"

namespace rcomm {

enum class AlgorithmName { allreduce, qsgd8, onebit_adam, decen32, decen8, async };

AlgorithmName algorithm_from_string(const std::string& s);
std::string to_string(AlgorithmName name);

struct AlgoParams {
  double gamma = 0.1;          // learning rate
  double beta1 = 0.9;          // Adam momentum decay
  double beta2 = 0.999;        // Adam variance decay
  double adam_eps = 1e-8;      // Adam denominator constant
  std::size_t warmup_steps = 10;
  Topology topology;           // decentralized algorithms
  Rounding rounding = Rounding::nearest;
  std::uint32_t rng_seed = 0;  // per-worker stochastic rounding stream
  std::size_t exchange_interval = 1;  // async: steps between exchanges
};

// Thrown when a parameter goes non-finite; reported, never masked.
struct DivergenceError : Error {
  DivergenceError(std::size_t step)
      : Error("divergence: non-finite parameter at step " +
              std::to_string(step)),
        step(step) {}
  std::size_t step;
};

// Synchronous algorithms as engine hooks. Centralized ones aggregate
// gradients and apply the averaged update after communication; the
// decentralized ones apply the local update first, then average the
// post-update replicas with their neighbors.
std::unique_ptr<BucketComm> make_algorithm(AlgorithmName name,
                                           const AlgoParams& params);

// Asynchronous DP-SG over the whole flattened model: the compute context
// runs local SGD micro-steps without waiting, the communication context
// averages model snapshots at fixed exchange points; the result published
// at one exchange is applied at the next (observed staleness =
// exchange_interval steps).
class AsyncTrainer {
 public:
  AsyncTrainer(Model& model, Endpoint& ep, const AlgoParams& params);

  struct StepResult {
    double compute_clock;
    double comm_clock;
    std::size_t staleness;  // steps between snapshot and its application
  };
  StepResult step(const Batch& batch);

  double compute_clock() const { return compute_clock_; }
  double comm_clock() const { return comm_clock_; }
  double virtual_time() const { return std::max(compute_clock_, comm_clock_); }
  std::size_t steps_taken() const { return step_; }

 private:
  Model& model_;
  Endpoint& ep_;
  AlgoParams params_;
  BucketArena arena_;  // whole model flat
  std::size_t step_ = 0;
  double compute_clock_ = 0.0;
  double comm_clock_ = 0.0;
  std::optional<std::vector<float>> pending_;
  std::size_t pending_step_ = 0;
  double model_cost_ = 0.0;
};

// max_i ||x_i - mean_j x_j||_inf across workers, via two reserved-tag
// collectives; metrics only, does not advance the caller's clock.
double replica_param_spread(Endpoint& ep, std::span<const float> x);

// Reserved bucket ids for metrics traffic, above any schedule bucket.
constexpr std::uint32_t kMetricsBucket = 0x0ffff00;

}  // namespace rcomm
