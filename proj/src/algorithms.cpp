#include "rcomm/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "rcomm/kernels.hpp"

namespace rcomm {

namespace {

void check_finite_params(std::span<const float> x, std::size_t step) {
  for (float v : x)
    if (!std::isfinite(v)) throw DivergenceError(step);
}

std::size_t epsilon_len_for(const Bucket& b, Endpoint& ep,
                            const EngineOptions& opts) {
  if (!opts.hierarchical)
    return owned_partition_len(b.elements, ep.world_size(), ep.rank());
  // leaders own partitions of the inter-node exchange; members hold none
  std::vector<int> leaders;
  std::map<int, int> first_of_node;
  for (int r = 0; r < ep.world_size(); ++r)
    if (!first_of_node.count(ep.node_of(r))) {
      first_of_node[ep.node_of(r)] = r;
      leaders.push_back(r);
    }
  std::sort(leaders.begin(), leaders.end());
  for (std::size_t i = 0; i < leaders.size(); ++i)
    if (leaders[i] == ep.rank())
      return owned_partition_len(b.elements, static_cast<int>(leaders.size()),
                                 static_cast<int>(i));
  return 0;
}

double aggregate_centralized(double now, std::span<float> x, Endpoint& ep,
                             const EngineOptions& opts, const Codec& codec,
                             ErrorState* es, std::mt19937* rng,
                             std::uint32_t bucket) {
  if (opts.hierarchical)
    return hierarchical_c(ep, now, x, codec, es, rng, bucket);
  if (codec.lossless()) return c_fp_s(ep, now, x, bucket);
  return c_lp_s(ep, now, x, codec, es, rng, bucket);
}

// Gradient-averaging DP-SG: x <- x - gamma/n * sum_j g_j. The allreduce
// algorithm uses the identity codec; qsgd8 routes through uniform8 without
// error compensation.
class CentralizedSgd : public BucketComm {
 public:
  CentralizedSgd(AlgoParams p, Codec codec) : p_(p), codec_(codec) {
    rng_.seed(p.rng_seed);
  }

  double run(double now, Bucket& b, Endpoint& ep,
             const EngineOptions& opts) override {
    auto grads = b.grads.span();
    now = aggregate_centralized(now, grads, ep, opts, codec_, nullptr, &rng_,
                                static_cast<std::uint32_t>(b.id));
    const float scale =
        static_cast<float>(-p_.gamma / static_cast<double>(ep.world_size()));
    kernels::axpy(scale, grads.data(), b.params.data(), grads.size());
    check_finite_params(b.params.span(), step_);
    return now;
  }

  void end_iteration(Endpoint&) override { ++step_; }

 private:
  AlgoParams p_;
  Codec codec_;
  std::mt19937 rng_;
  std::size_t step_ = 0;
};

// Warmup: full-precision Adam on c_fp_s-averaged gradients while the
// variance term accumulates. At warmup_steps the variance freezes; after
// that the per-worker momentum is aggregated through the onebit codec with
// error compensation and applied against the frozen variance.
class OneBitAdam : public BucketComm {
 public:
  explicit OneBitAdam(AlgoParams p) : p_(p) {
    if (p_.warmup_steps < 1) throw Error("onebit_adam: warmup_steps >= 1");
    rng_.seed(p_.rng_seed);
  }

  void setup(std::vector<Bucket>& buckets, Endpoint& ep,
             const EngineOptions& opts) override {
    state_.clear();
    step_ = 0;
    for (auto& b : buckets) {
      State s;
      s.momentum.assign(b.elements, 0.0f);
      s.variance.assign(b.elements, 0.0f);
      s.frozen_denom.assign(b.elements, 0.0f);
      s.ec = ErrorState(b.elements, epsilon_len_for(b, ep, opts));
      state_.push_back(std::move(s));
    }
  }

  double run(double now, Bucket& b, Endpoint& ep,
             const EngineOptions& opts) override {
    State& s = state_.at(b.id);
    auto grads = b.grads.span();
    const std::size_t len = b.elements;
    const float inv_n =
        1.0f / static_cast<float>(ep.world_size());
    const float b1 = static_cast<float>(p_.beta1);
    const float b2 = static_cast<float>(p_.beta2);
    const std::size_t t = step_ + 1;  // 1-based Adam step

    if (step_ < p_.warmup_steps) {
      Codec id{CodecKind::identity};
      now = aggregate_centralized(now, grads, ep, opts, id, nullptr, &rng_,
                                  static_cast<std::uint32_t>(b.id));
      kernels::scale(grads.data(), inv_n, len);  // mean gradient
      for (std::size_t k = 0; k < len; ++k) {
        s.momentum[k] = b1 * s.momentum[k] + (1.0f - b1) * grads[k];
        s.variance[k] = b2 * s.variance[k] + (1.0f - b2) * grads[k] * grads[k];
      }
      const double bc1 = 1.0 - std::pow(p_.beta1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(p_.beta2, static_cast<double>(t));
      auto params = b.params.span();
      for (std::size_t k = 0; k < len; ++k) {
        const double mhat = s.momentum[k] / bc1;
        const double vhat = s.variance[k] / bc2;
        params[k] -= static_cast<float>(p_.gamma * mhat /
                                        (std::sqrt(vhat) + p_.adam_eps));
      }
      if (step_ + 1 == p_.warmup_steps) {
        // freeze the variance term
        for (std::size_t k = 0; k < len; ++k) {
          const double vhat = s.variance[k] / bc2;
          s.frozen_denom[k] =
              static_cast<float>(std::sqrt(vhat) + p_.adam_eps);
        }
      }
    } else {
      // compressed phase: aggregate the momentum update
      std::vector<float> local_m(len);
      for (std::size_t k = 0; k < len; ++k)
        local_m[k] = b1 * s.momentum[k] + (1.0f - b1) * grads[k];
      Codec ob{CodecKind::onebit};
      now = aggregate_centralized(now, local_m, ep, opts, ob, &s.ec, &rng_,
                                  static_cast<std::uint32_t>(b.id));
      kernels::scale(local_m.data(), inv_n, len);
      s.momentum = local_m;  // identical on every worker
      auto params = b.params.span();
      for (std::size_t k = 0; k < len; ++k)
        params[k] -=
            static_cast<float>(p_.gamma) * s.momentum[k] / s.frozen_denom[k];
    }
    check_finite_params(b.params.span(), step_);
    return now;
  }

  void end_iteration(Endpoint&) override { ++step_; }

  const ErrorState& error_state(std::size_t bucket) const {
    return state_.at(bucket).ec;
  }

 private:
  struct State {
    std::vector<float> momentum;
    std::vector<float> variance;
    std::vector<float> frozen_denom;
    ErrorState ec;
  };
  AlgoParams p_;
  std::mt19937 rng_;
  std::vector<State> state_;
  std::size_t step_ = 0;
};

// Local SGD step, then neighborhood averaging of the post-update replicas.
// decen32 uses the identity codec, decen8 uniform8. The hierarchical
// toggle does not apply to decentralized exchange and is ignored.
class DecentralizedSgd : public BucketComm {
 public:
  DecentralizedSgd(AlgoParams p, Codec codec) : p_(p), codec_(codec) {
    rng_.seed(p.rng_seed);
  }

  double run(double now, Bucket& b, Endpoint& ep,
             const EngineOptions&) override {
    auto params = b.params.span();
    kernels::axpy(static_cast<float>(-p_.gamma), b.grads.data(), params.data(),
                  params.size());
    Topology topo = p_.topology;
    topo.n = ep.world_size();
    if (codec_.lossless()) {
      now = d_fp_s(ep, now, params, topo, step_, ReduceMode::average,
                   static_cast<std::uint32_t>(b.id));
    } else {
      now = d_lp_s(ep, now, params, topo, step_, codec_, ReduceMode::average,
                   &rng_, static_cast<std::uint32_t>(b.id));
    }
    check_finite_params(params, step_);
    return now;
  }

  void end_iteration(Endpoint&) override { ++step_; }

 private:
  AlgoParams p_;
  Codec codec_;
  std::mt19937 rng_;
  std::size_t step_ = 0;
};

}  // namespace

AlgorithmName algorithm_from_string(const std::string& s) {
  if (s == "allreduce") return AlgorithmName::allreduce;
  if (s == "qsgd8") return AlgorithmName::qsgd8;
  if (s == "onebit_adam") return AlgorithmName::onebit_adam;
  if (s == "decen32") return AlgorithmName::decen32;
  if (s == "decen8") return AlgorithmName::decen8;
  if (s == "async") return AlgorithmName::async;
  throw Error("unknown algorithm '" + s + "'");
}

std::string to_string(AlgorithmName name) {
  switch (name) {
    case AlgorithmName::allreduce: return "allreduce";
    case AlgorithmName::qsgd8: return "qsgd8";
    case AlgorithmName::onebit_adam: return "onebit_adam";
    case AlgorithmName::decen32: return "decen32";
    case AlgorithmName::decen8: return "decen8";
    case AlgorithmName::async: return "async";
  }
  return "?";
}

std::unique_ptr<BucketComm> make_algorithm(AlgorithmName name,
                                           const AlgoParams& params) {
  switch (name) {
    case AlgorithmName::allreduce:
      return std::make_unique<CentralizedSgd>(params,
                                              Codec{CodecKind::identity});
    case AlgorithmName::qsgd8:
      return std::make_unique<CentralizedSgd>(
          params, Codec{CodecKind::uniform8, params.rounding});
    case AlgorithmName::onebit_adam:
      return std::make_unique<OneBitAdam>(params);
    case AlgorithmName::decen32:
      return std::make_unique<DecentralizedSgd>(params,
                                                Codec{CodecKind::identity});
    case AlgorithmName::decen8:
      return std::make_unique<DecentralizedSgd>(
          params, Codec{CodecKind::uniform8, params.rounding});
    case AlgorithmName::async:
      throw Error("async runs through AsyncTrainer, not the engine hooks");
  }
  throw Error("unknown algorithm");
}

AsyncTrainer::AsyncTrainer(Model& model, Endpoint& ep,
                           const AlgoParams& params)
    : model_(model), ep_(ep), params_(params) {
  if (params_.exchange_interval < 1)
    throw Error("async: exchange_interval >= 1");
  std::vector<FlatTensor*> ts;
  for (std::size_t l = 0; l < model_.layer_count(); ++l)
    ts.push_back(&model_.params(l));
  arena_ = BucketArena::flatten(ts);
  for (std::size_t l = 0; l < model_.layer_count(); ++l)
    model_cost_ += model_.layer_cost(l);
}

AsyncTrainer::StepResult AsyncTrainer::step(const Batch& batch) {
  auto params = arena_.span();
  std::size_t staleness = 0;

  if (step_ % params_.exchange_interval == 0) {
    // snapshot with all local progress, launch the averaging round, then
    // swap in the result published at the previous exchange point
    std::vector<float> snapshot(params.begin(), params.end());
    comm_clock_ = std::max(comm_clock_, compute_clock_);
    comm_clock_ = c_fp_s(ep_, comm_clock_, snapshot, kMetricsBucket + 2);
    kernels::scale(snapshot.data(),
                   1.0f / static_cast<float>(ep_.world_size()),
                   snapshot.size());
    if (pending_) {
      std::copy(pending_->begin(), pending_->end(), params.begin());
      staleness = step_ - pending_step_;
    }
    pending_ = std::move(snapshot);
    pending_step_ = step_;
  }

  model_.backward(batch);
  std::size_t off = 0;
  for (std::size_t l = 0; l < model_.layer_count(); ++l) {
    auto& g = model_.grads(l);
    kernels::axpy(static_cast<float>(-params_.gamma), g.data(),
                  params.data() + off, g.size());
    off += g.size();
  }
  compute_clock_ = ep_.compute(compute_clock_, model_cost_);
  check_finite_params(params, step_);
  ++step_;
  ep_.report_done(virtual_time());
  return {compute_clock_, comm_clock_, staleness};
}

double replica_param_spread(Endpoint& ep, std::span<const float> x) {
  const int n = ep.world_size();
  std::vector<float> sum(x.begin(), x.end());
  c_fp_s(ep, 0.0, sum, kMetricsBucket);
  double dev = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double mean = static_cast<double>(sum[k]) / n;
    dev = std::max(dev, std::fabs(static_cast<double>(x[k]) - mean));
  }
  std::vector<float> devs(static_cast<std::size_t>(n), 0.0f);
  devs[static_cast<std::size_t>(ep.rank())] = static_cast<float>(dev);
  c_fp_s(ep, 0.0, devs, kMetricsBucket + 1);
  double spread = 0.0;
  for (float v : devs) spread = std::max(spread, static_cast<double>(v));
  return spread;
}

}  // namespace rcomm
