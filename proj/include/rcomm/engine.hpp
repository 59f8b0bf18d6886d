#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "rcomm/harness.hpp"
#include "rcomm/tensor.hpp"
#include "rcomm/transport.hpp"

namespace rcomm {

struct TraceEvent {
  std::string event;  // compute_start | compute_end | comm_start | comm_end
  std::string name;   // layer or bucket identifier
  double virtual_time;
};

class Trace {
 public:
  void record(std::string event, std::string name, double t) {
    events_.push_back({std::move(event), std::move(name), t});
  }
  const std::vector<TraceEvent>& events() const { return events_; }
  void clear() { events_.clear(); }
  // one JSON object per line
  void write_jsonl(std::ostream& os) const;

 private:
  std::vector<TraceEvent> events_;
};

// Fused communication unit: member layers' parameters and gradients each
// flattened into one arena. Communication may start once the trigger
// layer's backward has completed.
struct Bucket {
  std::size_t id = 0;
  std::vector<std::size_t> layers;  // in backward completion order
  BucketArena params;
  BucketArena grads;
  std::size_t trigger_layer = 0;
  std::size_t elements = 0;
};

struct ProfileRecord {
  std::size_t layer;
  std::size_t elements;
  double timestamp;  // backward completion, first-iteration virtual clock
};
using ProfileLog = std::vector<ProfileRecord>;

struct EngineOptions {
  bool overlap = true;       // O: launch bucket comm at its trigger
  bool fusion = true;        // F: group layers into capacity-bound buckets
  bool hierarchical = false; // H: intra-node aggregation before inter-node
  std::size_t bucket_capacity_bytes = 8u * 1024 * 1024;
};

// The batched communication function an algorithm registers for a set of
// layers: f((x1,g1)...(xn,gn)) applied per bucket on the communication
// context. Implementations live in algorithms.
class BucketComm {
 public:
  virtual ~BucketComm() = default;
  virtual void setup(std::vector<Bucket>& buckets, Endpoint& ep,
                     const EngineOptions& opts) {
    (void)buckets, (void)ep, (void)opts;
  }
  virtual double run(double now, Bucket& bucket, Endpoint& ep,
                     const EngineOptions& opts) = 0;
  virtual void end_iteration(Endpoint& ep) { (void)ep; }
};

// Two-phase execution optimizer. profile() runs the first iteration
// without optimizations while logging hook invocations, then fixes the
// bucketing, flattening and overlap schedule used by run_iteration().
class Engine {
 public:
  explicit Engine(Endpoint& ep, EngineOptions opts = {});

  // Ablation toggles; invalid once profiled.
  void set_overlap(bool enabled);
  void set_fusion(bool enabled);
  void set_hierarchical(bool enabled);
  const EngineOptions& options() const { return opts_; }

  const ProfileLog& profile(Model& model, BucketComm& hook,
                            const Batch& batch);
  double run_iteration(Model& model, BucketComm& hook, const Batch& batch,
                       double now);

  bool profiled() const { return profiled_; }
  // Virtual clock at the end of the profiling iteration.
  double profile_end() const { return profile_end_; }
  std::vector<Bucket>& buckets() { return buckets_; }
  const ProfileLog& log() const { return log_; }
  Trace& trace() { return trace_; }

 private:
  void check_not_profiled() const;

  Endpoint& ep_;
  EngineOptions opts_;
  bool profiled_ = false;
  double profile_end_ = 0.0;
  ProfileLog log_;
  std::vector<Bucket> buckets_;
  std::vector<std::size_t> bucket_of_layer_;
  Trace trace_;
};

}  // namespace rcomm
