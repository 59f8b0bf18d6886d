#pragma once

#include <string>
#include <vector>

#include "rcomm/algorithms.hpp"

namespace rcomm {

// Full declarative description of one experiment. A config file is the only
// input to a run; anything not in here must not affect results.
struct ExperimentConfig {
  AlgorithmName algorithm = AlgorithmName::allreduce;
  AlgoParams algo;

  ModelKind model = ModelKind::logistic;
  std::size_t model_d = 20;
  std::size_t model_hidden = 8;

  std::size_t dataset_n = 2000;
  std::uint32_t dataset_seed = 1;
  float dataset_noise = 0.05f;
  std::size_t batch_size = 32;

  int n_workers = 4;
  int nodes = 1;
  std::string backend = "sim";  // sim | tcp
  std::vector<std::string> addresses;  // tcp only, host:port per rank

  NetworkProfile network;

  EngineOptions engine;
  double seconds_per_element = 1e-8;  // virtual backward cost per parameter

  std::size_t epochs = 1;
  std::uint32_t seed = 0;
  std::string output = "out";
};

// Parses a JSON config; unknown keys are rejected and named in the error.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// Canonical JSON form; parse(serialize(c)) reproduces c.
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace rcomm
