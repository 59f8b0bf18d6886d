#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rcomm/runner.hpp"

namespace {

using rcomm::ExperimentConfig;
using rcomm::RunResult;

// "--axis name=v1,v2,..." for name in {bandwidth, latency, algorithm}.
struct SweepAxes {
  std::vector<double> bandwidth;
  std::vector<double> latency;
  std::vector<std::string> algorithm;
};

SweepAxes parse_axes(const std::vector<std::string>& specs) {
  SweepAxes axes;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw rcomm::Error("sweep: axis must look like name=v1,v2 (got '" +
                         spec + "')");
    const std::string name = spec.substr(0, eq);
    std::stringstream vals(spec.substr(eq + 1));
    std::string item;
    while (std::getline(vals, item, ',')) {
      if (name == "bandwidth") axes.bandwidth.push_back(std::stod(item));
      else if (name == "latency") axes.latency.push_back(std::stod(item));
      else if (name == "algorithm") axes.algorithm.push_back(item);
      else throw rcomm::Error("sweep: unknown axis '" + name + "'");
    }
  }
  return axes;
}

int cmd_run(const std::string& config_path, int rank) {
  ExperimentConfig cfg = rcomm::load_config(config_path);
  RunResult result = rcomm::run_experiment(cfg, rank);
  rcomm::write_outputs(cfg, result, rank);
  char line[256];
  std::snprintf(line, sizeof line,
                "final_loss=%.6g epoch_virtual_time=%.6g bytes_per_epoch=%.6g "
                "replica_spread_final=%.6g\n",
                result.final_loss, result.epoch_virtual_time,
                result.bytes_per_epoch, result.replica_spread_final);
  std::cout << line;
  return 0;
}

int cmd_sweep(const std::string& config_path,
              const std::vector<std::string>& axis_specs) {
  ExperimentConfig base = rcomm::load_config(config_path);
  if (base.backend != "sim")
    throw rcomm::Error("sweep: only the sim backend is supported");
  SweepAxes axes = parse_axes(axis_specs);
  if (axes.bandwidth.empty())
    axes.bandwidth.push_back(base.network.inter_node.bandwidth);
  if (axes.latency.empty())
    axes.latency.push_back(base.network.inter_node.latency);
  if (axes.algorithm.empty())
    axes.algorithm.push_back(rcomm::to_string(base.algorithm));

  std::string csv = "algorithm,bandwidth,latency,epoch_virtual_time\n";
  for (const auto& algo : axes.algorithm)
    for (double bw : axes.bandwidth)
      for (double lat : axes.latency) {
        ExperimentConfig cfg = base;
        cfg.algorithm = rcomm::algorithm_from_string(algo);
        cfg.network.inter_node.bandwidth = bw;
        cfg.network.inter_node.latency = lat;
        cfg.network.intra_node.bandwidth = bw;
        cfg.network.intra_node.latency = lat;
        RunResult result = rcomm::run_experiment(cfg);
        char line[200];
        std::snprintf(line, sizeof line, "%s,%.17g,%.17g,%.17g\n",
                      algo.c_str(), bw, lat, result.epoch_virtual_time);
        csv += line;
      }
  std::filesystem::create_directories(base.output);
  std::ofstream(std::filesystem::path(base.output) / "sweep.csv") << csv;
  std::cout << csv;
  return 0;
}

int cmd_ablate(const std::string& config_path) {
  ExperimentConfig base = rcomm::load_config(config_path);
  if (base.backend != "sim")
    throw rcomm::Error("ablate: only the sim backend is supported");
  std::string csv = "overlap,fusion,hierarchical,epoch_virtual_time,final_loss\n";
  for (int mask = 0; mask < 8; ++mask) {
    ExperimentConfig cfg = base;
    cfg.engine.overlap = mask & 4;
    cfg.engine.fusion = mask & 2;
    cfg.engine.hierarchical = mask & 1;
    RunResult result = rcomm::run_experiment(cfg);
    char line[160];
    std::snprintf(line, sizeof line, "%d,%d,%d,%.17g,%.17g\n",
                  cfg.engine.overlap ? 1 : 0, cfg.engine.fusion ? 1 : 0,
                  cfg.engine.hierarchical ? 1 : 0, result.epoch_virtual_time,
                  result.final_loss);
    csv += line;
  }
  std::filesystem::create_directories(base.output);
  std::ofstream(std::filesystem::path(base.output) / "ablate.csv") << csv;
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relaxed-collective training benchmark"};
  app.require_subcommand(1);

  std::string config_path;
  int rank = -1;
  auto* run = app.add_subcommand("run", "execute one experiment");
  run->add_option("config", config_path, "JSON experiment config")->required();
  run->add_option("--rank", rank, "worker rank (tcp backend)");

  std::string sweep_config;
  std::vector<std::string> axis_specs;
  auto* sweep = app.add_subcommand("sweep", "grid over network conditions");
  sweep->add_option("config", sweep_config, "JSON experiment config")
      ->required();
  sweep->add_option("--axis", axis_specs,
                    "axis values, e.g. bandwidth=1e8,1e9 or "
                    "algorithm=allreduce,qsgd8");

  std::string ablate_config;
  auto* ablate = app.add_subcommand("ablate", "all 8 optimizer toggle combos");
  ablate->add_option("config", ablate_config, "JSON experiment config")
      ->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(config_path, rank);
    if (sweep->parsed()) return cmd_sweep(sweep_config, axis_specs);
    return cmd_ablate(ablate_config);
  } catch (const rcomm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
