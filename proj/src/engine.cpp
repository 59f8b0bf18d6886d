#include "rcomm/engine.hpp"

#include <algorithm>

namespace rcomm {

void Trace::write_jsonl(std::ostream& os) const {
  for (const auto& e : events_) {
    os << "{\"event\":\"" << e.event << "\",\"name\":\"" << e.name
       << "\",\"virtual_time\":" << e.virtual_time << "}\n";
  }
}

Engine::Engine(Endpoint& ep, EngineOptions opts) : ep_(ep), opts_(opts) {}

void Engine::check_not_profiled() const {
  if (profiled_)
    throw Error("engine: optimization toggles are fixed after profiling");
}

void Engine::set_overlap(bool enabled) {
  check_not_profiled();
  opts_.overlap = enabled;
}

void Engine::set_fusion(bool enabled) {
  check_not_profiled();
  opts_.fusion = enabled;
}

void Engine::set_hierarchical(bool enabled) {
  check_not_profiled();
  opts_.hierarchical = enabled;
}

const ProfileLog& Engine::profile(Model& model, BucketComm& hook,
                                  const Batch& batch) {
  if (profiled_) throw Error("engine: already profiled");
  const std::size_t L = model.layer_count();
  if (L == 0) throw Error("engine: model has no parameter tensors");

  // First iteration, unoptimized: one communication per layer, in backward
  // completion order, no overlap.
  log_.clear();
  model.backward(batch);
  double t = 0.0;
  std::vector<Bucket> unfused;
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t l = L - 1 - i;
    t = ep_.compute(t, model.layer_cost(l));
    log_.push_back({l, model.params(l).size(), t});
    Bucket b;
    b.id = i;
    b.layers = {l};
    b.trigger_layer = l;
    b.elements = model.params(l).size();
    std::vector<FlatTensor*> p = {&model.params(l)};
    std::vector<FlatTensor*> g = {&model.grads(l)};
    b.params = BucketArena::flatten(p);
    b.grads = BucketArena::flatten(g);
    unfused.push_back(std::move(b));
  }
  hook.setup(unfused, ep_, opts_);
  for (auto& b : unfused) {
    try {
      t = hook.run(t, b, ep_, opts_);
    } catch (const Error& e) {
      throw Error("hook failed at layer " + std::to_string(b.trigger_layer) +
                  ": " + e.what());
    }
  }
  hook.end_iteration(ep_);
  ep_.report_done(t);
  profile_end_ = t;

  // Bucketing: greedy packing in backward (reverse layer) order so early
  // finishing gradients open the widest overlap window.
  buckets_.clear();
  bucket_of_layer_.assign(L, 0);
  const std::size_t cap = opts_.fusion ? opts_.bucket_capacity_bytes : 0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t l = L - 1 - i;
    const std::size_t bytes = 4 * model.params(l).size();
    if (buckets_.empty() || used + bytes > cap) {
      Bucket b;
      b.id = buckets_.size();
      buckets_.push_back(std::move(b));
      used = 0;
    }
    buckets_.back().layers.push_back(l);
    buckets_.back().trigger_layer = l;  // last member in backward order
    bucket_of_layer_[l] = buckets_.back().id;
    used += bytes;
  }

  // Flattening: one contiguous arena per bucket for params and for grads.
  for (auto& b : buckets_) {
    std::vector<FlatTensor*> p, g;
    for (std::size_t l : b.layers) {
      p.push_back(&model.params(l));
      g.push_back(&model.grads(l));
    }
    b.params = BucketArena::flatten(p);
    b.grads = BucketArena::flatten(g);
    b.elements = b.params.size();
  }
  hook.setup(buckets_, ep_, opts_);
  profiled_ = true;
  return log_;
}

double Engine::run_iteration(Model& model, BucketComm& hook,
                             const Batch& batch, double now) {
  if (!profiled_) throw Error("engine: profile() must run first");
  const std::size_t L = model.layer_count();

  model.backward(batch);

  // Compute context: backward in reverse layer order.
  std::vector<double> ready(buckets_.size(), now);
  double t = now;
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t l = L - 1 - i;
    trace_.record("compute_start", "layer" + std::to_string(l), t);
    t = ep_.compute(t, model.layer_cost(l));
    trace_.record("compute_end", "layer" + std::to_string(l), t);
    const std::size_t b = bucket_of_layer_[l];
    if (buckets_[b].trigger_layer == l) ready[b] = t;
  }
  const double backward_end = t;

  // Communication context: buckets queue in trigger order; with overlap
  // disabled every bucket waits for the full backward pass.
  double c = now;
  for (auto& b : buckets_) {
    const double start =
        std::max(c, opts_.overlap ? ready[b.id] : backward_end);
    trace_.record("comm_start", "bucket" + std::to_string(b.id), start);
    try {
      c = hook.run(start, b, ep_, opts_);
    } catch (const Error& e) {
      throw Error("communication failed for bucket " + std::to_string(b.id) +
                  ": " + e.what());
    }
    trace_.record("comm_end", "bucket" + std::to_string(b.id), c);
  }
  hook.end_iteration(ep_);

  const double end = std::max(backward_end, c);
  ep_.report_done(end);
  return end;
}

}  // namespace rcomm
