// ===== test_trainer.cpp =====

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "durnn/checkpoint.hpp"
#include "durnn/trainer.hpp"

using namespace durnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& leaf) {
  const fs::path p = fs::temp_directory_path() / "durnn_trainer_tests" / leaf;
  fs::remove_all(p);
  return p;
}

ExperimentConfig tiny_config(const std::string& out_dir) {
  ExperimentConfig c;
  c.task = "adding";
  c.seq_len = 10;
  c.batch = 4;
  c.max_iters = 6;
  c.eval_interval = 2;
  c.eval_batches = 2;
  c.seed = 5;
  c.lr = 1e-3;
  c.layers = {{8, Variant::durnn}};
  c.out_dir = out_dir;
  c.ckpt_interval = 0;
  c.check_constraints_every = 1;
  return c;
}

struct LogRow {
  std::string iter, loss, lr, wall;
};

std::vector<LogRow> read_log(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "iter,loss,lr,wall_ms");
  std::vector<LogRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    LogRow r;
    std::getline(ss, r.iter, ',');
    std::getline(ss, r.loss, ',');
    std::getline(ss, r.lr, ',');
    std::getline(ss, r.wall, ',');
    rows.push_back(r);
  }
  return rows;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void check_same_model(LoadedCheckpoint& a, LoadedCheckpoint& b) {
  CHECK(a.iteration == b.iteration);
  CHECK(a.adam.step_count == b.adam.step_count);
  CHECK(a.rng_train == b.rng_train);
  CHECK(a.rng_eval == b.rng_eval);
  std::vector<TensorRef> ra = collect_params(a.net);
  std::vector<TensorRef> rb = collect_params(b.net);
  REQUIRE(ra.size() == rb.size());
  for (size_t k = 0; k < ra.size(); ++k) {
    CHECK(ra[k].name == rb[k].name);
    CHECK(std::memcmp(ra[k].data, rb[k].data, ra[k].count * sizeof(double)) == 0);
  }
  REQUIRE(a.adam.m.size() == b.adam.m.size());
  for (size_t k = 0; k < a.adam.m.size(); ++k) {
    CHECK(a.adam.m[k] == b.adam.m[k]);
    CHECK(a.adam.v[k] == b.adam.v[k]);
  }
}

}  // namespace

TEST_CASE("a short run logs every eval point and checkpoints the end state") {
  ExperimentConfig cfg = tiny_config(scratch("short").string());
  long hook_calls = 0;
  TrainResult res = run_training(cfg, {}, [&](long iter, const Network& net) {
    ++hook_calls;
    CHECK(iter == hook_calls);
    CHECK(net.layers.size() == 1);
  });

  CHECK(res.iterations == 6);
  CHECK_FALSE(res.stopped_early);
  CHECK(res.achieved_iter == -1);
  CHECK(hook_calls == 6);

  std::vector<LogRow> rows = read_log(res.log_path);
  REQUIRE(rows.size() == 4);  // iters 0, 2, 4, 6
  CHECK(rows[0].iter == "0");
  CHECK(rows[1].iter == "2");
  CHECK(rows[2].iter == "4");
  CHECK(rows[3].iter == "6");
  for (const LogRow& r : rows) {
    CHECK(std::stod(r.loss) > 0.0);
    CHECK(std::stod(r.lr) == 1e-3);
    CHECK(std::stol(r.wall) >= 0);
  }
  CHECK(std::stod(rows.back().loss) == res.final_eval_loss);

  LoadedCheckpoint ckpt = load_checkpoint(res.ckpt_path);
  CHECK(ckpt.iteration == 6);
  CHECK(ckpt.adam.step_count == 6);
  CHECK(ckpt.config == cfg);
}

TEST_CASE("the untrained adding model evaluates near the 1/6 baseline") {
  ExperimentConfig cfg = tiny_config(scratch("baseline").string());
  cfg.seq_len = 100;
  cfg.batch = 20;
  cfg.eval_batches = 10;
  cfg.eval_interval = 1;
  cfg.max_iters = 1;
  cfg.layers = {{32, Variant::durnn}};
  TrainResult res = run_training(cfg);
  std::vector<LogRow> rows = read_log(res.log_path);
  REQUIRE(rows.size() == 2);
  // Zero readout weights make the untrained prediction exactly b_out = 1,
  // the target mean, so the eval is a 200-sample estimate of Var(target).
  const double untrained = std::stod(rows[0].loss);
  CHECK(untrained > 0.13);
  CHECK(untrained < 0.21);
}

TEST_CASE("identical seeds reproduce logs and checkpoints bitwise") {
  const std::string dir = scratch("determinism").string();
  ExperimentConfig cfg = tiny_config(dir);

  TrainResult first = run_training(cfg);
  const std::string ckpt_a = file_bytes(first.ckpt_path);
  std::vector<LogRow> rows_a = read_log(first.log_path);

  TrainResult second = run_training(cfg);  // fresh run, same out_dir
  CHECK(file_bytes(second.ckpt_path) == ckpt_a);
  std::vector<LogRow> rows_b = read_log(second.log_path);
  REQUIRE(rows_a.size() == rows_b.size());
  for (size_t i = 0; i < rows_a.size(); ++i) {
    CHECK(rows_a[i].iter == rows_b[i].iter);
    CHECK(rows_a[i].loss == rows_b[i].loss);  // textual %.17g, hence bitwise
    CHECK(rows_a[i].lr == rows_b[i].lr);
  }
}

TEST_CASE("resuming continues an uninterrupted run bitwise") {
  ExperimentConfig whole_cfg = tiny_config(scratch("resume_whole").string());
  TrainResult whole = run_training(whole_cfg);

  ExperimentConfig part_cfg = tiny_config(scratch("resume_part").string());
  part_cfg.max_iters = 3;  // interruption point (not eval-aligned)
  TrainResult part = run_training(part_cfg);
  CHECK(part.iterations == 3);

  ExperimentConfig rest_cfg = tiny_config(scratch("resume_rest").string());
  TrainResult rest = run_training(rest_cfg, part.ckpt_path);
  CHECK(rest.iterations == 6);

  LoadedCheckpoint a = load_checkpoint(whole.ckpt_path);
  LoadedCheckpoint b = load_checkpoint(rest.ckpt_path);
  check_same_model(a, b);

  // The resumed log holds exactly the rows after the interruption point, and
  // they match the uninterrupted run's.
  std::vector<LogRow> whole_rows = read_log(whole.log_path);
  std::vector<LogRow> rest_rows = read_log(rest.log_path);
  REQUIRE(whole_rows.size() == 4);
  REQUIRE(rest_rows.size() == 2);  // iters 4, 6
  for (size_t i = 0; i < rest_rows.size(); ++i) {
    CHECK(rest_rows[i].iter == whole_rows[i + 2].iter);
    CHECK(rest_rows[i].loss == whole_rows[i + 2].loss);
    CHECK(rest_rows[i].lr == whole_rows[i + 2].lr);
  }

  SUBCASE("a resume that changes the computation is rejected") {
    ExperimentConfig bad = rest_cfg;
    bad.batch += 1;
    CHECK_THROWS_AS(run_training(bad, part.ckpt_path), std::runtime_error);
  }
}

TEST_CASE("stop_at_loss ends the run at the first satisfying eval") {
  ExperimentConfig cfg = tiny_config(scratch("earlystop").string());
  cfg.stop_at_loss = 10.0;  // any untrained model beats this
  TrainResult res = run_training(cfg);
  CHECK(res.iterations == 0);
  CHECK(res.achieved_iter == 0);
  CHECK(res.stopped_early);
  LoadedCheckpoint ckpt = load_checkpoint(res.ckpt_path);
  CHECK(ckpt.iteration == 0);
}

TEST_CASE("trace export emits one row per layer, sublayer, step, neuron") {
  ExperimentConfig cfg = tiny_config(scratch("traces").string());
  cfg.seq_len = 6;
  cfg.layers = {{5, Variant::durnn}, {4, Variant::rnn_relu}};
  Rng rng(3);
  Network net = init_network(build_layer_specs(cfg), config_out_dim(cfg),
                             cfg.readout_bias_init, rng);
  std::vector<Mat> xs = trace_input(cfg);
  REQUIRE(xs.size() == 6);
  REQUIRE(xs[0].rows == 2);
  REQUIRE(xs[0].cols == 1);

  fs::create_directories(cfg.out_dir);
  const std::string csv = cfg.out_dir + "/trace.csv";
  export_traces(net, xs, csv);

  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "layer,sublayer,t,neuron,activation");
  std::map<std::string, int> sublayer_rows;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    std::istringstream ss(line);
    std::string layer, sublayer, t, neuron, act;
    std::getline(ss, layer, ',');
    std::getline(ss, sublayer, ',');
    std::getline(ss, t, ',');
    std::getline(ss, neuron, ',');
    std::getline(ss, act, ',');
    ++sublayer_rows[layer + "/" + sublayer];
    CHECK(std::stod(act) >= 0.0);  // relu outputs
  }
  // layer 1 has both sublayers (5 neurons), layer 2 is short-only (4 neurons)
  CHECK(rows == 2 * 6 * 5 + 6 * 4);
  CHECK(sublayer_rows["1/short"] == 30);
  CHECK(sublayer_rows["1/long"] == 30);
  CHECK(sublayer_rows["2/short"] == 24);
  CHECK(sublayer_rows.count("2/long") == 0);

  SUBCASE("zero input and zero biases give all-zero activations") {
    for (Mat& x : xs)
      for (double& v : x.data) v = 0.0;
    export_traces(net, xs, csv);
    std::ifstream zin(csv);
    std::getline(zin, line);
    while (std::getline(zin, line)) {
      if (line.empty()) continue;
      CHECK(line.substr(line.rfind(',') + 1) == "0");
    }
  }
  SUBCASE("a batch is not a trace") {
    std::vector<Mat> wide(6, Mat(2, 3));
    CHECK_THROWS_AS(export_traces(net, wide, csv), std::invalid_argument);
  }
}

TEST_CASE("trace inputs are deterministic and task-shaped") {
  ExperimentConfig cfg = tiny_config(scratch("trace_in").string());
  cfg.trace_seed = 77;
  std::vector<Mat> a = trace_input(cfg);
  std::vector<Mat> b = trace_input(cfg);
  REQUIRE(a.size() == b.size());
  for (size_t t = 0; t < a.size(); ++t) CHECK(a[t].data == b[t].data);

  cfg.task = "mnist";
  cfg.seq_len = 12;
  cfg.batch = 2;
  std::vector<Mat> px = trace_input(cfg);
  REQUIRE(px.size() == 12);
  for (const Mat& x : px) {
    REQUIRE(x.rows == 1);
    REQUIRE(x.cols == 1);
    CHECK(x.at(0, 0) >= 0.0);
    CHECK(x.at(0, 0) < 1.0);
  }
}

TEST_CASE("ablation shares the data stream across variants") {
  ExperimentConfig base = tiny_config(scratch("ablate").string());
  base.max_iters = 2;
  base.eval_interval = 1;
  auto results = run_ablation(base, {Variant::durnn, Variant::rnn_relu});
  REQUIRE(results.size() == 2);
  CHECK(results[0].first == "durnn");
  CHECK(results[1].first == "rnn_relu");

  std::ifstream in(base.out_dir + "/ablation.csv");
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "variant,iter,loss,lr,wall_ms");
  std::map<std::string, int> per_variant;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++per_variant[line.substr(0, line.find(','))];
  }
  CHECK(per_variant["durnn"] == 3);  // iters 0, 1, 2
  CHECK(per_variant["rnn_relu"] == 3);
  CHECK(per_variant.size() == 2);

  // Identical final RNG states prove both variants consumed the identical
  // batch and eval draw sequences — the shared data stream, observed.
  LoadedCheckpoint a = load_checkpoint(results[0].second.ckpt_path);
  LoadedCheckpoint b = load_checkpoint(results[1].second.ckpt_path);
  CHECK(a.rng_train == b.rng_train);
  CHECK(a.rng_eval == b.rng_eval);
  CHECK(a.config.layers[0].variant == Variant::durnn);
  CHECK(b.config.layers[0].variant == Variant::rnn_relu);
}

TEST_CASE("numerical blowups abort and retain the last-good checkpoint") {
  ExperimentConfig cfg = tiny_config(scratch("blowup").string());
  cfg.seq_len = 20;
  cfg.max_iters = 10;
  cfg.eval_interval = 100;  // no mid-run evals
  cfg.lr = 1e150;
  cfg.ckpt_interval = 1;
  cfg.check_constraints_every = 0;
  try {
    run_training(cfg);
    FAIL("expected throw");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("aborted during update") != std::string::npos);
    CHECK(msg.find("last-good checkpoint") != std::string::npos);
  }
  LoadedCheckpoint ckpt = load_checkpoint(cfg.out_dir + "/checkpoint.ckpt");
  CHECK(ckpt.iteration >= 1);  // the first update cannot overflow
  CHECK(ckpt.iteration < 10);
}
