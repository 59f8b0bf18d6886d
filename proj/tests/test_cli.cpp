#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "rcomm/runner.hpp"

using namespace rcomm;

namespace {

ExperimentConfig tiny_config() {
  return parse_config(R"({
    "algorithm": {"name": "allreduce", "gamma": 0.1},
    "model": {"kind": "logistic", "d": 6},
    "dataset": {"n": 64, "seed": 3, "batch_size": 8},
    "cluster": {"n_workers": 2, "nodes": 1, "backend": "sim"},
    "epochs": 2,
    "seed": 7
  })");
}

}  // namespace

TEST_CASE("config parsing fills defaults and reads nested fields") {
  ExperimentConfig cfg = parse_config(R"({
    "algorithm": {"name": "decen8", "topology": "ring", "rounding": "stochastic"},
    "model": {"kind": "mlp", "d": 10, "hidden": 4},
    "network": {"inter": {"latency": 0.005, "bandwidth": 1e9},
                "straggler": {"rank": 1, "slowdown": 2.0}},
    "engine": {"overlap": false, "bucket_capacity_bytes": 1024}
  })");
  CHECK(cfg.algorithm == AlgorithmName::decen8);
  CHECK(cfg.algo.topology.kind == TopologyKind::ring);
  CHECK(cfg.algo.rounding == Rounding::stochastic);
  CHECK(cfg.model == ModelKind::mlp);
  CHECK(cfg.model_hidden == 4);
  CHECK(cfg.network.inter_node.latency == 0.005);
  REQUIRE(cfg.network.straggler.has_value());
  CHECK(cfg.network.straggler->slowdown == 2.0);
  CHECK_FALSE(cfg.engine.overlap);
  CHECK(cfg.engine.bucket_capacity_bytes == 1024);
  CHECK(cfg.algo.gamma == 0.1);  // default untouched
  CHECK(cfg.n_workers == 4);
}

TEST_CASE("unknown keys are rejected by name") {
  auto expect_names = [](const std::string& text, const std::string& key) {
    try {
      parse_config(text);
      FAIL("expected a parse error for ", key);
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  };
  expect_names(R"({"epocs": 3})", "epocs");
  expect_names(R"({"algorithm": {"gama": 0.1}})", "algorithm.gama");
  expect_names(R"({"network": {"inter": {"bandwith": 1.0}}})",
               "network.inter.bandwith");
  expect_names(R"({"cluster": {"n_workers": "many"}})", "");  // type error
}

TEST_CASE("invalid values are rejected") {
  CHECK_THROWS_AS(parse_config("not json"), Error);
  CHECK_THROWS_AS(parse_config(R"({"algorithm": {"name": "sgd9000"}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"cluster": {"n_workers": 0}})"), Error);
  CHECK_THROWS_AS(
      parse_config(R"({"cluster": {"n_workers": 2, "nodes": 3}})"), Error);
  CHECK_THROWS_AS(
      parse_config(R"({"cluster": {"n_workers": 2, "backend": "tcp"}})"),
      Error);  // missing addresses
  CHECK_THROWS_AS(parse_config(R"({"epochs": 0})"), Error);
}

TEST_CASE("serialize/parse round-trip preserves every field") {
  ExperimentConfig cfg = tiny_config();
  cfg.network.straggler = StragglerSpec{1, 3.0};
  cfg.algo.rounding = Rounding::stochastic;
  cfg.engine.hierarchical = true;
  cfg.nodes = 2;
  ExperimentConfig back = parse_config(serialize_config(cfg));
  CHECK(serialize_config(back) == serialize_config(cfg));
  CHECK(back.algorithm == cfg.algorithm);
  CHECK(back.algo.gamma == cfg.algo.gamma);
  CHECK(back.algo.rounding == cfg.algo.rounding);
  CHECK(back.engine.hierarchical == cfg.engine.hierarchical);
  CHECK(back.nodes == cfg.nodes);
  CHECK(back.network.straggler->slowdown == 3.0);
}

TEST_CASE("epoch and node bookkeeping") {
  ExperimentConfig cfg = tiny_config();
  CHECK(steps_per_epoch(cfg) == 4);  // 64 rows / 2 workers / batch 8
  cfg.n_workers = 5;
  cfg.nodes = 2;
  CHECK(node_assignment(cfg) == std::vector<int>{0, 0, 0, 1, 1});
}

TEST_CASE("identical configs yield byte-identical metrics") {
  ExperimentConfig cfg = tiny_config();
  RunResult a = run_experiment(cfg);
  RunResult b = run_experiment(cfg);
  CHECK(format_metrics_csv(a.rows) == format_metrics_csv(b.rows));
  CHECK(a.final_loss == b.final_loss);
  CHECK(a.epoch_virtual_time == b.epoch_virtual_time);
  CHECK(a.final_params == b.final_params);
  CHECK(a.rows.size() == 2 * 8);  // 8 steps, 2 workers
  CHECK(a.bytes_per_epoch > 0.0);
}

TEST_CASE("metrics csv layout") {
  StepRow r;
  r.step = 3;
  r.worker = 1;
  r.loss = 0.5;
  r.grad_norm = 0.25;
  r.staleness = 2;
  r.bytes_sent = 128;
  r.virtual_time = 1.5;
  std::string csv = format_metrics_csv({r});
  CHECK(csv ==
        "step,worker,loss,grad_norm,replica_spread,staleness,bytes_sent,"
        "virtual_time\n3,1,0.5,0.25,,2,128,1.5\n");
  r.replica_spread = 0.125;
  CHECK(format_metrics_csv({r}).find(",0.125,2,") != std::string::npos);
}

TEST_CASE("8-bit gradient exchange moves about a quarter of the bytes") {
  // one flat 8192-element layer: the per-chunk headers are negligible
  ExperimentConfig cfg = parse_config(R"({
    "algorithm": {"name": "allreduce", "gamma": 0.001},
    "model": {"kind": "quadratic", "d": 8192},
    "dataset": {"n": 8, "seed": 1, "batch_size": 2},
    "cluster": {"n_workers": 4, "nodes": 1, "backend": "sim"},
    "epochs": 1,
    "seed": 5
  })");
  RunResult fp = run_experiment(cfg);
  cfg.algorithm = AlgorithmName::qsgd8;
  RunResult lp = run_experiment(cfg);
  const double ratio = lp.bytes_per_epoch / fp.bytes_per_epoch;
  CHECK(ratio > 0.2);
  CHECK(ratio < 0.35);
}

TEST_CASE("a straggler slows synchronous training end to end") {
  ExperimentConfig fair = tiny_config();
  fair.seconds_per_element = 1e-5;
  ExperimentConfig slow = fair;
  slow.network.straggler = StragglerSpec{1, 2.0};
  RunResult a = run_experiment(fair);
  RunResult b = run_experiment(slow);
  CHECK(b.epoch_virtual_time > 1.5 * a.epoch_virtual_time);
  // clocks change, arithmetic does not
  CHECK(a.final_params == b.final_params);
}
