#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rcomm/config.hpp"

namespace rcomm {

struct StepRow {
  std::size_t step = 0;
  int worker = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::optional<double> replica_spread;  // measured at epoch boundaries
  std::size_t staleness = 0;             // async only
  std::uint64_t bytes_sent = 0;          // cumulative, training traffic
  double virtual_time = 0.0;
};

struct RunResult {
  double final_loss = 0.0;           // full-dataset loss, averaged over workers
  double epoch_virtual_time = 0.0;   // makespan / epochs (wall clock on tcp)
  double bytes_per_epoch = 0.0;      // summed over workers, metrics excluded
  double replica_spread_final = 0.0;
  std::vector<float> final_params;   // rank 0 (sim) or the local rank (tcp)
  std::vector<StepRow> rows;         // sorted by (step, worker)
};

// Executes the experiment: all workers as threads on the sim backend, or the
// single local rank (tcp_rank >= 0) on the tcp backend.
RunResult run_experiment(const ExperimentConfig& cfg, int tcp_rank = -1);

// step,worker,loss,grad_norm,replica_spread,staleness,bytes_sent,virtual_time
std::string format_metrics_csv(const std::vector<StepRow>& rows);

// Writes metrics.csv (metrics_rank<r>.csv on tcp), summary.json and
// params.bin under cfg.output; creates the directory if needed.
void write_outputs(const ExperimentConfig& cfg, const RunResult& result,
                   int tcp_rank = -1);

// Steps per epoch implied by the config (base shard size over batch size).
std::size_t steps_per_epoch(const ExperimentConfig& cfg);

// rank -> node assignment: n_workers spread over cfg.nodes contiguously.
std::vector<int> node_assignment(const ExperimentConfig& cfg);

}  // namespace rcomm
