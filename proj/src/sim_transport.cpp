#include <algorithm>

#include "rcomm/transport.hpp"

namespace rcomm {

struct SimCluster::Mailbox {
  std::mutex mu;
  std::condition_variable cv;
  // (src, tag) -> FIFO of (arrival virtual time, payload)
  std::map<std::pair<int, std::uint32_t>, std::deque<std::pair<double, Bytes>>>
      queues;
};

class SimEndpoint : public Endpoint {
 public:
  SimEndpoint(SimCluster* cluster, int rank)
      : cluster_(cluster), rank_(rank) {}

  int rank() const override { return rank_; }
  int node() const override { return cluster_->node_of_[rank_]; }
  int world_size() const override { return cluster_->n_; }
  int node_of(int rank) const override {
    if (rank < 0 || rank >= cluster_->n_)
      throw Error("unknown rank " + std::to_string(rank));
    return cluster_->node_of_[rank];
  }

  double send(double now, int dst, std::uint32_t tag,
              std::span<const std::uint8_t> payload) override {
    if (dst < 0 || dst >= cluster_->n_)
      throw Error("send: unknown destination rank " + std::to_string(dst));
    const bool intra = cluster_->node_of_[rank_] == cluster_->node_of_[dst];
    const LinkCost& link =
        intra ? cluster_->profile_.intra_node : cluster_->profile_.inter_node;
    // sender occupies its link for the transmit time; latency is pipelined
    const double sent = now + static_cast<double>(payload.size()) / link.bandwidth;
    const double arrival = sent + link.latency;
    auto& box = *cluster_->boxes_[dst];
    {
      std::lock_guard<std::mutex> lk(box.mu);
      if (cluster_->closed_) throw Error("send on closed endpoint");
      box.queues[{rank_, tag}].emplace_back(arrival,
                                            Bytes(payload.begin(), payload.end()));
    }
    box.cv.notify_all();
    bytes_sent_ += payload.size();
    ++messages_sent_;
    return sent;
  }

  std::pair<double, Bytes> recv(double now, int src,
                                std::uint32_t tag) override {
    if (src < 0 || src >= cluster_->n_)
      throw Error("recv: unknown source rank " + std::to_string(src));
    auto& box = *cluster_->boxes_[rank_];
    std::unique_lock<std::mutex> lk(box.mu);
    auto key = std::make_pair(src, tag);
    box.cv.wait(lk, [&] {
      if (cluster_->closed_) return true;
      auto it = box.queues.find(key);
      return it != box.queues.end() && !it->second.empty();
    });
    if (cluster_->closed_) throw Error("recv on closed endpoint");
    auto& q = box.queues[key];
    auto [arrival, payload] = std::move(q.front());
    q.pop_front();
    return {std::max(now, arrival), std::move(payload)};
  }

  double compute(double now, double seconds) override {
    return now + seconds * cluster_->profile_.slowdown_for(rank_);
  }

  void report_done(double now) override {
    std::lock_guard<std::mutex> lk(cluster_->clock_mu_);
    cluster_->max_reported_ = std::max(cluster_->max_reported_, now);
  }

  double virtual_elapsed() const override { return cluster_->virtual_elapsed(); }

  std::uint64_t bytes_sent() const override { return bytes_sent_; }
  std::uint64_t messages_sent() const override { return messages_sent_; }
  void reset_counters() override { bytes_sent_ = 0; messages_sent_ = 0; }

 private:
  SimCluster* cluster_;
  int rank_;
  std::uint64_t bytes_sent_ = 0;
  std::uint64_t messages_sent_ = 0;
};

SimCluster::SimCluster(int n, NetworkProfile profile, std::vector<int> node_of)
    : n_(n), profile_(std::move(profile)), node_of_(std::move(node_of)) {
  if (n_ <= 0) throw Error("SimCluster: need at least one worker");
  if (node_of_.empty()) node_of_.assign(n_, 0);
  if (static_cast<int>(node_of_.size()) != n_)
    throw Error("SimCluster: node assignment must cover every rank");
  for (int r = 0; r < n_; ++r) {
    boxes_.push_back(std::make_unique<Mailbox>());
    endpoints_.push_back(std::make_unique<SimEndpoint>(this, r));
  }
}

SimCluster::~SimCluster() { close(); }

Endpoint& SimCluster::endpoint(int rank) {
  if (rank < 0 || rank >= n_) throw Error("unknown rank");
  return *endpoints_[rank];
}

double SimCluster::virtual_elapsed() const {
  std::lock_guard<std::mutex> lk(clock_mu_);
  return max_reported_;
}

void SimCluster::reset_clock() {
  std::lock_guard<std::mutex> lk(clock_mu_);
  max_reported_ = 0.0;
}

void SimCluster::close() {
  for (auto& box : boxes_) {
    std::lock_guard<std::mutex> lk(box->mu);
    closed_ = true;
  }
  for (auto& box : boxes_) box->cv.notify_all();
}

}  // namespace rcomm
