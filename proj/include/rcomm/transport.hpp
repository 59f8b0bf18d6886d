#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "rcomm/tensor.hpp"

namespace rcomm {

struct WorkerId {
  int rank = 0;
  int node = 0;
};

struct LinkCost {
  double latency = 0.0;     // seconds per message
  double bandwidth = 1e12;  // payload bytes per second
};

struct StragglerSpec {
  int rank = -1;
  double slowdown = 1.0;  // >= 1, multiplies compute spans
};

// Two link classes plus optional straggler injection; drives the
// alpha-beta virtual-clock cost model of the simulated backend.
struct NetworkProfile {
  LinkCost intra_node;
  LinkCost inter_node;
  std::optional<StragglerSpec> straggler;

  double slowdown_for(int rank) const {
    return straggler && straggler->rank == rank ? straggler->slowdown : 1.0;
  }
};

using Bytes = std::vector<std::uint8_t>;

// Point-to-point message endpoint owned by one worker. Virtual time flows
// through the call sites: send/recv/compute take the caller's current clock
// and return the advanced clock, so a worker may keep several independent
// timelines (e.g. a compute context and a communication context).
class Endpoint {
 public:
  virtual ~Endpoint() = default;

  virtual int rank() const = 0;
  virtual int node() const = 0;
  virtual int world_size() const = 0;
  virtual int node_of(int rank) const = 0;

  // Returns the sender-side clock after the message is on the wire.
  virtual double send(double now, int dst, std::uint32_t tag,
                      std::span<const std::uint8_t> payload) = 0;

  // Blocks until the matching message arrives; FIFO per (src, tag).
  // Returns the receiver clock (>= now) and the payload.
  virtual std::pair<double, Bytes> recv(double now, int src,
                                        std::uint32_t tag) = 0;

  // Charges a compute span (straggler slowdown applied on the sim backend).
  virtual double compute(double now, double seconds) = 0;

  // Reports this worker's final clock for makespan accounting. No-op on TCP.
  virtual void report_done(double now) = 0;

  // Cluster-wide virtual-clock makespan. Errors on backends without a
  // virtual clock (TCP).
  virtual double virtual_elapsed() const {
    throw Error("virtual clock unsupported on this backend");
  }

  virtual std::uint64_t bytes_sent() const = 0;
  virtual std::uint64_t messages_sent() const = 0;
  virtual void reset_counters() = 0;
};

// In-process cluster of n endpoints routed through internally synchronized
// mailboxes, with alpha-beta virtual-clock accounting per message.
class SimCluster {
 public:
  // node_of[r] gives the node index of rank r; empty means all on node 0.
  SimCluster(int n, NetworkProfile profile, std::vector<int> node_of = {});
  ~SimCluster();

  int size() const { return n_; }
  Endpoint& endpoint(int rank);

  // Virtual-clock makespan: max clock reported via report_done.
  double virtual_elapsed() const;
  void reset_clock();

  // Wakes all blocked receivers with a closed-endpoint error.
  void close();

 private:
  friend class SimEndpoint;
  struct Mailbox;
  int n_;
  NetworkProfile profile_;
  std::vector<int> node_of_;
  std::vector<std::unique_ptr<Mailbox>> boxes_;
  std::vector<std::unique_ptr<Endpoint>> endpoints_;
  mutable std::mutex clock_mu_;
  double max_reported_ = 0.0;
  bool closed_ = false;
};

// Real TCP sockets on a full mesh, same framing for every peer:
// 16-byte little-endian header [src:4][dst:4][tag:4][len:4], then payload.
// Virtual-clock queries are unsupported; clocks pass through unchanged
// except compute(), which adds the span at unit speed.
class TcpEndpoint : public Endpoint {
 public:
  // addresses[r] = "host:port" for every rank; blocks until the mesh is up.
  TcpEndpoint(int rank, std::vector<std::string> addresses,
              std::vector<int> node_of = {});
  ~TcpEndpoint() override;

  int rank() const override { return rank_; }
  int node() const override { return node_of_[rank_]; }
  int world_size() const override { return static_cast<int>(addresses_.size()); }
  int node_of(int rank) const override { return node_of_.at(rank); }

  double send(double now, int dst, std::uint32_t tag,
              std::span<const std::uint8_t> payload) override;
  std::pair<double, Bytes> recv(double now, int src,
                                std::uint32_t tag) override;
  double compute(double now, double seconds) override { return now + seconds; }
  void report_done(double) override {}

  std::uint64_t bytes_sent() const override { return bytes_sent_; }
  std::uint64_t messages_sent() const override { return messages_sent_; }
  void reset_counters() override { bytes_sent_ = 0; messages_sent_ = 0; }

  void close();

 private:
  void reader_loop(int fd);

  int rank_;
  std::vector<std::string> addresses_;
  std::vector<int> node_of_;
  std::vector<int> socket_of_rank_;
  std::vector<std::unique_ptr<std::mutex>> write_mu_;
  std::vector<std::thread> readers_;
  int listen_fd_ = -1;

  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::pair<int, std::uint32_t>, std::deque<Bytes>> inbox_;
  bool closed_ = false;

  std::uint64_t bytes_sent_ = 0;
  std::uint64_t messages_sent_ = 0;
};

}  // namespace rcomm
