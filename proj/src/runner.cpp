#include "rcomm/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "rcomm/engine.hpp"

namespace rcomm {

namespace {

struct WorkerOut {
  std::vector<StepRow> rows;
  std::vector<float> params;
  double final_loss = 0.0;
  double spread_final = 0.0;
  double total_bytes = 0.0;  // summed over workers
};

Dataset make_dataset(const ExperimentConfig& cfg) {
  if (cfg.model == ModelKind::quadratic)
    return Dataset::generate_quadratic(cfg.dataset_n, cfg.model_d,
                                       cfg.dataset_seed);
  return Dataset::generate_logistic(cfg.dataset_n, cfg.model_d,
                                    cfg.dataset_seed, cfg.dataset_noise);
}

std::vector<float> current_params(Model& model) {
  std::vector<float> out;
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    auto& t = model.params(l);
    out.insert(out.end(), t.data(), t.data() + t.size());
  }
  return out;
}

double grad_norm(Model& model) {
  double s = 0.0;
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    auto& g = model.grads(l);
    for (std::size_t k = 0; k < g.size(); ++k)
      s += static_cast<double>(g[k]) * g[k];
  }
  return std::sqrt(s);
}

// Exact sum of one double per rank, summed in rank order at rank 0 and
// broadcast back; uses reserved metrics tags, excluded from byte accounting.
double gather_sum(Endpoint& ep, double value, std::uint32_t tag) {
  Bytes payload(8);
  const int n = ep.world_size();
  if (n == 1) return value;
  if (ep.rank() == 0) {
    double total = value;
    for (int src = 1; src < n; ++src) {
      auto [t, data] = ep.recv(0.0, src, tag);
      double v;
      std::memcpy(&v, data.data(), 8);
      total += v;
    }
    std::memcpy(payload.data(), &total, 8);
    for (int dst = 1; dst < n; ++dst) ep.send(0.0, dst, tag, payload);
    return total;
  }
  std::memcpy(payload.data(), &value, 8);
  ep.send(0.0, 0, tag, payload);
  auto [t, data] = ep.recv(0.0, 0, tag);
  double total;
  std::memcpy(&total, data.data(), 8);
  return total;
}

WorkerOut run_worker(const ExperimentConfig& cfg, Endpoint& ep) {
  const int rank = ep.rank();
  Dataset full = make_dataset(cfg);
  Dataset shard = full.shard(cfg.n_workers, rank);

  auto model = make_model(cfg.model, cfg.model_d, cfg.model_hidden, cfg.seed);
  model->set_compute_cost(cfg.seconds_per_element);

  AlgoParams params = cfg.algo;
  params.topology.n = cfg.n_workers;
  params.rng_seed = cfg.seed + 10007u * static_cast<std::uint32_t>(rank);

  const std::size_t spe = steps_per_epoch(cfg);
  const std::size_t total_steps = cfg.epochs * spe;
  const std::size_t bs = cfg.batch_size;
  auto batch_at = [&](std::size_t k) {
    const std::size_t begin = (k * bs) % shard.n;
    return Batch{&shard, begin, std::min(begin + bs, shard.n)};
  };

  WorkerOut out;
  std::uint64_t metrics_bytes = 0;
  auto measure_spread = [&]() {
    const std::uint64_t before = ep.bytes_sent();
    const double s = replica_param_spread(ep, current_params(*model));
    metrics_bytes += ep.bytes_sent() - before;
    return s;
  };

  if (cfg.algorithm == AlgorithmName::async) {
    AsyncTrainer trainer(*model, ep, params);
    for (std::size_t k = 0; k < total_steps; ++k) {
      const Batch b = batch_at(k);
      StepRow row;
      row.step = k;
      row.worker = rank;
      row.loss = model->loss(b);
      const auto res = trainer.step(b);
      row.grad_norm = grad_norm(*model);
      row.staleness = res.staleness;
      row.virtual_time = trainer.virtual_time();
      if ((k + 1) % spe == 0) row.replica_spread = measure_spread();
      row.bytes_sent = ep.bytes_sent() - metrics_bytes;
      out.rows.push_back(row);
    }
  } else {
    auto hook = make_algorithm(cfg.algorithm, params);
    Engine engine(ep, cfg.engine);
    double now = 0.0;
    for (std::size_t k = 0; k < total_steps; ++k) {
      const Batch b = batch_at(k);
      StepRow row;
      row.step = k;
      row.worker = rank;
      row.loss = model->loss(b);
      if (k == 0) {
        engine.profile(*model, *hook, b);
        now = engine.profile_end();
      } else {
        now = engine.run_iteration(*model, *hook, b, now);
      }
      row.grad_norm = grad_norm(*model);
      row.virtual_time = now;
      if ((k + 1) % spe == 0) row.replica_spread = measure_spread();
      row.bytes_sent = ep.bytes_sent() - metrics_bytes;
      out.rows.push_back(row);
    }
  }

  out.spread_final = out.rows.back().replica_spread.value_or(0.0);
  const double local_loss = model->loss(Batch{&full, 0, full.n});
  const std::uint32_t base = phase::make_tag(kMetricsBucket + 8, 0);
  out.final_loss =
      gather_sum(ep, local_loss, base) / static_cast<double>(cfg.n_workers);
  const double training_bytes =
      static_cast<double>(ep.bytes_sent() - metrics_bytes);
  out.total_bytes = gather_sum(ep, training_bytes, base + 1);
  out.params = current_params(*model);
  return out;
}

}  // namespace

std::size_t steps_per_epoch(const ExperimentConfig& cfg) {
  const std::size_t base =
      cfg.dataset_n / static_cast<std::size_t>(cfg.n_workers);
  if (base == 0) throw Error("config: more workers than dataset rows");
  return std::max<std::size_t>(1, (base + cfg.batch_size - 1) / cfg.batch_size);
}

std::vector<int> node_assignment(const ExperimentConfig& cfg) {
  std::vector<int> node_of(static_cast<std::size_t>(cfg.n_workers));
  const int base = cfg.n_workers / cfg.nodes;
  const int rem = cfg.n_workers % cfg.nodes;
  int rank = 0;
  for (int node = 0; node < cfg.nodes; ++node) {
    const int count = base + (node < rem ? 1 : 0);
    for (int k = 0; k < count; ++k) node_of[static_cast<std::size_t>(rank++)] = node;
  }
  return node_of;
}

RunResult run_experiment(const ExperimentConfig& cfg, int tcp_rank) {
  RunResult result;
  if (cfg.backend == "tcp" || tcp_rank >= 0) {
    if (tcp_rank < 0 || tcp_rank >= cfg.n_workers)
      throw Error("tcp backend needs --rank in [0, n_workers)");
    TcpEndpoint ep(tcp_rank, cfg.addresses, node_assignment(cfg));
    const auto t0 = std::chrono::steady_clock::now();
    WorkerOut out = run_worker(cfg, ep);
    const std::chrono::duration<double> wall =
        std::chrono::steady_clock::now() - t0;
    ep.close();
    result.final_loss = out.final_loss;
    result.epoch_virtual_time = wall.count() / static_cast<double>(cfg.epochs);
    result.bytes_per_epoch = out.total_bytes / static_cast<double>(cfg.epochs);
    result.replica_spread_final = out.spread_final;
    result.final_params = std::move(out.params);
    result.rows = std::move(out.rows);
    return result;
  }

  SimCluster cluster(cfg.n_workers, cfg.network, node_assignment(cfg));
  std::vector<WorkerOut> outs(static_cast<std::size_t>(cfg.n_workers));
  std::vector<std::exception_ptr> errors(outs.size());
  std::vector<std::thread> threads;
  for (int r = 0; r < cfg.n_workers; ++r) {
    threads.emplace_back([&, r] {
      try {
        outs[static_cast<std::size_t>(r)] =
            run_worker(cfg, cluster.endpoint(r));
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
        cluster.close();  // unblock peers stuck in collectives
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  result.final_loss = outs[0].final_loss;
  result.epoch_virtual_time =
      cluster.virtual_elapsed() / static_cast<double>(cfg.epochs);
  result.bytes_per_epoch = outs[0].total_bytes / static_cast<double>(cfg.epochs);
  result.replica_spread_final = outs[0].spread_final;
  result.final_params = std::move(outs[0].params);
  for (auto& o : outs)
    result.rows.insert(result.rows.end(), o.rows.begin(), o.rows.end());
  std::sort(result.rows.begin(), result.rows.end(),
            [](const StepRow& a, const StepRow& b) {
              return a.step != b.step ? a.step < b.step : a.worker < b.worker;
            });
  return result;
}

std::string format_metrics_csv(const std::vector<StepRow>& rows) {
  std::string out =
      "step,worker,loss,grad_norm,replica_spread,staleness,bytes_sent,"
      "virtual_time\n";
  char buf[320];
  for (const auto& r : rows) {
    char spread[40] = "";
    if (r.replica_spread)
      std::snprintf(spread, sizeof spread, "%.17g", *r.replica_spread);
    std::snprintf(buf, sizeof buf, "%zu,%d,%.17g,%.17g,%s,%zu,%llu,%.17g\n",
                  r.step, r.worker, r.loss, r.grad_norm, spread, r.staleness,
                  static_cast<unsigned long long>(r.bytes_sent),
                  r.virtual_time);
    out += buf;
  }
  return out;
}

void write_outputs(const ExperimentConfig& cfg, const RunResult& result,
                   int tcp_rank) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output);
  const bool tcp = cfg.backend == "tcp" || tcp_rank >= 0;

  const std::string metrics_name =
      tcp ? "metrics_rank" + std::to_string(tcp_rank) + ".csv" : "metrics.csv";
  std::ofstream(fs::path(cfg.output) / metrics_name)
      << format_metrics_csv(result.rows);

  if (!tcp || tcp_rank == 0) {
    nlohmann::json summary = {
        {"final_loss", result.final_loss},
        {"epoch_virtual_time", result.epoch_virtual_time},
        {"bytes_per_epoch", result.bytes_per_epoch},
        {"replica_spread_final", result.replica_spread_final},
    };
    std::ofstream(fs::path(cfg.output) / "summary.json") << summary.dump(2)
                                                         << "\n";
    std::ofstream params(fs::path(cfg.output) / "params.bin",
                         std::ios::binary);
    params.write(reinterpret_cast<const char*>(result.final_params.data()),
                 static_cast<std::streamsize>(4 * result.final_params.size()));
  }
}

}  // namespace rcomm
