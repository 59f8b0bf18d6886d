#include "rcomm/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rcomm {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) { ok = true; break; }
    if (!ok)
      throw Error("config: unknown key '" + where + it.key() + "'");
  }
}

template <typename T>
void get(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    obj.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw Error("config: bad value for '" + std::string(key) +
                "': " + e.what());
  }
}

std::string get_str(const json& obj, const char* key) {
  std::string s;
  get(obj, key, s);
  return s;
}

TopologyKind topology_from_string(const std::string& s) {
  if (s == "ring") return TopologyKind::ring;
  if (s == "random") return TopologyKind::random;
  if (s == "full") return TopologyKind::full;
  throw Error("config: unknown topology '" + s + "'");
}

std::string to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::ring: return "ring";
    case TopologyKind::random: return "random";
    case TopologyKind::full: return "full";
  }
  return "?";
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::quadratic: return "quadratic";
    case ModelKind::logistic: return "logistic";
    case ModelKind::mlp: return "mlp";
  }
  return "?";
}

LinkCost parse_link(const json& obj, const std::string& where) {
  check_keys(obj, where, {"latency", "bandwidth"});
  LinkCost link;
  get(obj, "latency", link.latency);
  get(obj, "bandwidth", link.bandwidth);
  return link;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config: not valid JSON: ") + e.what());
  }
  check_keys(root, "",
             {"algorithm", "model", "dataset", "cluster", "network", "engine",
              "epochs", "seed", "output"});
  ExperimentConfig cfg;

  if (root.contains("algorithm")) {
    const json& a = root.at("algorithm");
    check_keys(a, "algorithm.",
               {"name", "gamma", "beta1", "beta2", "adam_eps", "warmup_steps",
                "topology", "topology_seed", "rounding", "exchange_interval"});
    if (a.contains("name"))
      cfg.algorithm = algorithm_from_string(get_str(a, "name"));
    get(a, "gamma", cfg.algo.gamma);
    get(a, "beta1", cfg.algo.beta1);
    get(a, "beta2", cfg.algo.beta2);
    get(a, "adam_eps", cfg.algo.adam_eps);
    get(a, "warmup_steps", cfg.algo.warmup_steps);
    if (a.contains("topology"))
      cfg.algo.topology.kind =
          topology_from_string(get_str(a, "topology"));
    get(a, "topology_seed", cfg.algo.topology.seed);
    if (a.contains("rounding")) {
      const std::string r = get_str(a, "rounding");
      if (r == "nearest") cfg.algo.rounding = Rounding::nearest;
      else if (r == "stochastic") cfg.algo.rounding = Rounding::stochastic;
      else throw Error("config: unknown rounding '" + r + "'");
    }
    get(a, "exchange_interval", cfg.algo.exchange_interval);
  }

  if (root.contains("model")) {
    const json& m = root.at("model");
    check_keys(m, "model.", {"kind", "d", "hidden"});
    if (m.contains("kind"))
      cfg.model = model_kind_from_string(get_str(m, "kind"));
    get(m, "d", cfg.model_d);
    get(m, "hidden", cfg.model_hidden);
  }

  if (root.contains("dataset")) {
    const json& d = root.at("dataset");
    check_keys(d, "dataset.", {"n", "seed", "noise", "batch_size"});
    get(d, "n", cfg.dataset_n);
    get(d, "seed", cfg.dataset_seed);
    get(d, "noise", cfg.dataset_noise);
    get(d, "batch_size", cfg.batch_size);
  }

  if (root.contains("cluster")) {
    const json& c = root.at("cluster");
    check_keys(c, "cluster.", {"n_workers", "nodes", "backend", "addresses"});
    get(c, "n_workers", cfg.n_workers);
    get(c, "nodes", cfg.nodes);
    get(c, "backend", cfg.backend);
    get(c, "addresses", cfg.addresses);
    if (cfg.backend != "sim" && cfg.backend != "tcp")
      throw Error("config: unknown backend '" + cfg.backend + "'");
  }

  if (root.contains("network")) {
    const json& n = root.at("network");
    check_keys(n, "network.", {"intra", "inter", "straggler"});
    if (n.contains("intra"))
      cfg.network.intra_node = parse_link(n.at("intra"), "network.intra.");
    if (n.contains("inter"))
      cfg.network.inter_node = parse_link(n.at("inter"), "network.inter.");
    if (n.contains("straggler")) {
      const json& s = n.at("straggler");
      check_keys(s, "network.straggler.", {"rank", "slowdown"});
      StragglerSpec spec;
      get(s, "rank", spec.rank);
      get(s, "slowdown", spec.slowdown);
      cfg.network.straggler = spec;
    }
  }

  if (root.contains("engine")) {
    const json& e = root.at("engine");
    check_keys(e, "engine.",
               {"overlap", "fusion", "hierarchical", "bucket_capacity_bytes",
                "seconds_per_element"});
    get(e, "overlap", cfg.engine.overlap);
    get(e, "fusion", cfg.engine.fusion);
    get(e, "hierarchical", cfg.engine.hierarchical);
    get(e, "bucket_capacity_bytes", cfg.engine.bucket_capacity_bytes);
    get(e, "seconds_per_element", cfg.seconds_per_element);
  }

  get(root, "epochs", cfg.epochs);
  get(root, "seed", cfg.seed);
  get(root, "output", cfg.output);

  if (cfg.n_workers < 1) throw Error("config: cluster.n_workers must be >= 1");
  if (cfg.nodes < 1 || cfg.nodes > cfg.n_workers)
    throw Error("config: cluster.nodes must be in [1, n_workers]");
  if (cfg.batch_size < 1) throw Error("config: dataset.batch_size must be >= 1");
  if (cfg.epochs < 1) throw Error("config: epochs must be >= 1");
  if (cfg.backend == "tcp" &&
      cfg.addresses.size() != static_cast<std::size_t>(cfg.n_workers))
    throw Error("config: cluster.addresses must list one host:port per rank");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json a = {
      {"name", to_string(cfg.algorithm)},
      {"gamma", cfg.algo.gamma},
      {"beta1", cfg.algo.beta1},
      {"beta2", cfg.algo.beta2},
      {"adam_eps", cfg.algo.adam_eps},
      {"warmup_steps", cfg.algo.warmup_steps},
      {"topology", to_string(cfg.algo.topology.kind)},
      {"topology_seed", cfg.algo.topology.seed},
      {"rounding",
       cfg.algo.rounding == Rounding::nearest ? "nearest" : "stochastic"},
      {"exchange_interval", cfg.algo.exchange_interval},
  };
  json net = {
      {"intra",
       {{"latency", cfg.network.intra_node.latency},
        {"bandwidth", cfg.network.intra_node.bandwidth}}},
      {"inter",
       {{"latency", cfg.network.inter_node.latency},
        {"bandwidth", cfg.network.inter_node.bandwidth}}},
  };
  if (cfg.network.straggler)
    net["straggler"] = {{"rank", cfg.network.straggler->rank},
                        {"slowdown", cfg.network.straggler->slowdown}};
  json root = {
      {"algorithm", a},
      {"model",
       {{"kind", to_string(cfg.model)},
        {"d", cfg.model_d},
        {"hidden", cfg.model_hidden}}},
      {"dataset",
       {{"n", cfg.dataset_n},
        {"seed", cfg.dataset_seed},
        {"noise", cfg.dataset_noise},
        {"batch_size", cfg.batch_size}}},
      {"cluster",
       {{"n_workers", cfg.n_workers},
        {"nodes", cfg.nodes},
        {"backend", cfg.backend},
        {"addresses", cfg.addresses}}},
      {"network", net},
      {"engine",
       {{"overlap", cfg.engine.overlap},
        {"fusion", cfg.engine.fusion},
        {"hierarchical", cfg.engine.hierarchical},
        {"bucket_capacity_bytes", cfg.engine.bucket_capacity_bytes},
        {"seconds_per_element", cfg.seconds_per_element}}},
      {"epochs", cfg.epochs},
      {"seed", cfg.seed},
      {"output", cfg.output},
  };
  return root.dump(2);
}

}  // namespace rcomm
