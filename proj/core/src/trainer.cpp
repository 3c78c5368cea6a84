// ===== trainer.cpp =====

#include "durnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "durnn/checkpoint.hpp"
#include "durnn/grad.hpp"
#include "durnn/optim.hpp"
#include "durnn/tasks.hpp"

namespace durnn {

namespace {

namespace fs = std::filesystem;

// Stream separators: init / train / eval never share draws.
constexpr unsigned long long kInitStream = 0x9e3779b97f4a7c15ULL;
constexpr unsigned long long kTrainStream = 0xc2b2ae3d27d4eb4fULL;
constexpr unsigned long long kEvalStream = 0x165667b19e3779f9ULL;

constexpr double kConstraintSlack = 1e-10;

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error("trainer: " + msg);
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string pick_idx_file(const std::string& dir, const std::string& base) {
  const std::string raw = dir + "/" + base;
  if (fs::exists(raw)) return raw;
  if (fs::exists(raw + ".gz")) return raw + ".gz";
  fail("missing data file " + raw + "[.gz]");
}

MnistData truncate_samples(MnistData d, int count) {
  if (count >= d.count) return d;
  const size_t px = static_cast<size_t>(d.rows) * d.cols;
  d.pixels.resize(static_cast<size_t>(count) * px);
  d.labels.resize(static_cast<size_t>(count));
  d.count = count;
  return d;
}

struct TaskData {
  bool pixels = false;  // mnist / pmnist
  MnistData train, test;
};

TaskData load_task(const ExperimentConfig& cfg) {
  TaskData data;
  if (cfg.task == "adding") return data;
  data.pixels = true;
  data.train = load_mnist(pick_idx_file(cfg.data_dir, "train-images-idx3-ubyte"),
                          pick_idx_file(cfg.data_dir, "train-labels-idx1-ubyte"));
  data.test = load_mnist(pick_idx_file(cfg.data_dir, "t10k-images-idx3-ubyte"),
                         pick_idx_file(cfg.data_dir, "t10k-labels-idx1-ubyte"));
  if (data.train.rows * data.train.cols != cfg.seq_len)
    fail("seq_len " + std::to_string(cfg.seq_len) + " does not match " +
         std::to_string(data.train.rows * data.train.cols) + " pixels per image");
  // The training subset is the leading block, fixed across runs.
  data.train = truncate_samples(std::move(data.train), cfg.mnist_train_subset);
  if (cfg.task == "pmnist") {
    PixelPermutation perm = make_permutation(cfg.seq_len, cfg.permute_seed);
    data.train = apply_permutation(data.train, perm);
    data.test = apply_permutation(data.test, perm);
  }
  return data;
}

TaskBatch draw_batch(const ExperimentConfig& cfg, const TaskData& data, Rng& rng,
                     int batch) {
  if (!data.pixels) return gen_adding(cfg.seq_len, batch, rng);
  std::vector<int> idx(static_cast<size_t>(batch));
  for (int& i : idx) i = rng.bounded_int(data.train.count);
  return mnist_batch(data.train, idx);
}

struct LossOut {
  double loss = 0.0;
  Mat g_h, g_w_out;
  Vec g_b_out;
};

LossOut batch_loss(const Network& net, const TaskBatch& batch, const Mat& h_last,
                   bool pixels) {
  LossOut out;
  if (pixels) {
    ClassificationReadout r = readout_classification(net.head, h_last, batch.labels);
    out = {r.loss, std::move(r.g_h), std::move(r.g_w_out), std::move(r.g_b_out)};
  } else {
    RegressionReadout r = readout_regression(net.head, h_last, batch.targets);
    out = {r.loss, std::move(r.g_h), std::move(r.g_w_out), std::move(r.g_b_out)};
  }
  return out;
}

double evaluate(const ExperimentConfig& cfg, const TaskData& data, const Network& net,
                Rng& rng_eval) {
  double sum = 0.0;
  for (int k = 0; k < cfg.eval_batches; ++k) {
    TaskBatch batch = draw_batch(cfg, data, rng_eval, cfg.batch);
    NetworkCache cache = forward_sequence(net, batch.inputs);
    const Mat& h_last = cache.layer.back().output_at(cfg.seq_len);
    if (data.pixels)
      sum += readout_classification(net.head, h_last, batch.labels).loss;
    else
      sum += readout_regression(net.head, h_last, batch.targets).loss;
  }
  return sum / cfg.eval_batches;
}

double test_error(const ExperimentConfig& cfg, const TaskData& data, const Network& net) {
  int correct = 0;
  for (int start = 0; start < data.test.count; start += cfg.batch) {
    const int stop = std::min(start + cfg.batch, data.test.count);
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(stop - start));
    for (int i = start; i < stop; ++i) idx.push_back(i);
    TaskBatch batch = mnist_batch(data.test, idx);
    NetworkCache cache = forward_sequence(net, batch.inputs);
    correct +=
        readout_classification(net.head, cache.layer.back().output_at(cfg.seq_len),
                               batch.labels)
            .correct;
  }
  return 1.0 - static_cast<double>(correct) / data.test.count;
}

void assert_feasible(const Network& net, long iter) {
  const double v = constraint_violation(net);
  if (v > kConstraintSlack)
    fail("constraint violation " + fmt17(v) + " after update " + std::to_string(iter));
}

}  // namespace

TrainResult run_training(const ExperimentConfig& cfg, const std::string& resume_path,
                         const UpdateHook& after_update) {
  const TaskData data = load_task(cfg);
  fs::create_directories(cfg.out_dir);

  Rng rng_train(cfg.seed ^ kTrainStream);
  Rng rng_eval(cfg.seed ^ kEvalStream);
  Network net;
  AdamState adam;
  long start = 0;
  const bool resumed = !resume_path.empty();
  if (resumed) {
    LoadedCheckpoint loaded = load_checkpoint(resume_path, cfg);
    net = std::move(loaded.net);
    adam = std::move(loaded.adam);
    start = loaded.iteration;
    rng_train = loaded.rng_train;
    rng_eval = loaded.rng_eval;
  } else {
    Rng rng_init(cfg.seed ^ kInitStream);
    net = init_network(build_layer_specs(cfg), config_out_dim(cfg),
                       cfg.readout_bias_init, rng_init);
    // Zero readout weights: the untrained prediction is exactly b_out (the
    // target mean for the adding task, so the eval starts at the 1/6
    // baseline). The first update gives w_out its gradient; recurrent layers
    // receive gradients from the second update on.
    for (double& v : net.head.w_out.data) v = 0.0;
  }

  TrainResult res;
  res.log_path = cfg.out_dir + "/train_log.csv";
  res.ckpt_path = cfg.out_dir + "/checkpoint.ckpt";
  const std::string test_log_path = cfg.out_dir + "/test_log.csv";

  // Resuming appends; anything else (including resuming into a fresh
  // out_dir) starts the log with its header.
  auto open_log = [&](std::ofstream& out, const std::string& path, const char* header) {
    const bool append = resumed && fs::exists(path) && fs::file_size(path) > 0;
    out.open(path, append ? std::ios::app : std::ios::trunc | std::ios::out);
    if (!out) fail("cannot open log '" + path + "'");
    if (!append) out << header << '\n';
  };
  std::ofstream log;
  open_log(log, res.log_path, "iter,loss,lr,wall_ms");
  std::ofstream test_log;
  if (data.pixels) open_log(test_log, test_log_path, "iter,test_err");

  LrSchedule sched;
  sched.initial_lr = cfg.lr;
  sched.decay_factor = cfg.lr_decay;
  sched.decay_every = static_cast<int>(cfg.lr_decay_every);

  // Parameter refs stay valid: projection preserves tensor storage.
  std::vector<TensorRef> params = collect_params(net);
  if (!resumed) adam = make_adam(params);

  const auto t0 = std::chrono::steady_clock::now();
  auto wall_ms = [&t0] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - t0)
        .count();
  };

  res.best_eval_loss = std::numeric_limits<double>::infinity();
  long i = start;
  bool stop = false;
  while (true) {
    // A resumed run skips its entry point: that eval/checkpoint was already
    // written by the run that produced the checkpoint.
    const bool fresh_point = !resumed || i > start;
    if (fresh_point && (i % cfg.eval_interval == 0 || i >= cfg.max_iters)) {
      // Only schedule-aligned evals advance the eval stream; an off-schedule
      // final eval runs on a detached copy, so the checkpointed stream state
      // depends on the completed schedule alone and resume stays bitwise.
      const bool aligned = i % cfg.eval_interval == 0;
      Rng detached = rng_eval;
      const double loss = evaluate(cfg, data, net, aligned ? rng_eval : detached);
      log << i << ',' << fmt17(loss) << ',' << fmt17(schedule_lr(sched, i)) << ','
          << wall_ms() << '\n';
      log.flush();
      res.final_eval_loss = loss;
      res.best_eval_loss = std::min(res.best_eval_loss, loss);
      if (cfg.stop_at_loss > 0.0 && loss < cfg.stop_at_loss) {
        if (res.achieved_iter < 0) res.achieved_iter = i;
        stop = true;
      }
      if (data.pixels && (i % cfg.test_eval_every == 0 || i >= cfg.max_iters || stop)) {
        const double err = test_error(cfg, data, net);
        test_log << i << ',' << fmt17(err) << '\n';
        test_log.flush();
        res.final_test_err = err;
        if (cfg.stop_at_test_err > 0.0 && err < cfg.stop_at_test_err) {
          if (res.test_achieved_iter < 0) res.test_achieved_iter = i;
          stop = true;
        }
      }
      assert_feasible(net, i);  // every logged iteration is feasible
    }
    if (stop || i >= cfg.max_iters) {
      save_checkpoint(res.ckpt_path, cfg, net, adam, i, rng_train, rng_eval);
      break;
    }
    if (fresh_point && cfg.ckpt_interval > 0 && i > 0 && i % cfg.ckpt_interval == 0)
      save_checkpoint(res.ckpt_path, cfg, net, adam, i, rng_train, rng_eval);

    TaskBatch batch = draw_batch(cfg, data, rng_train, cfg.batch);
    try {
      NetworkCache cache = forward_sequence(net, batch.inputs);
      LossOut out =
          batch_loss(net, batch, cache.layer.back().output_at(cfg.seq_len), data.pixels);
      NetworkGrads grads = backward_sequence(
          net, batch.inputs, cache, loss_grads_at_last(cfg.seq_len, std::move(out.g_h)));
      std::vector<TensorRef> grefs =
          collect_grads(net, grads, out.g_w_out, out.g_b_out);
      adam_step(adam, params, grefs, schedule_lr(sched, i));
      project_constraints(net);
    } catch (const std::exception& e) {
      fail("aborted during update " + std::to_string(i + 1) + ": " + e.what() +
           " (last-good checkpoint: " + res.ckpt_path + ")");
    }
    ++i;
    if (after_update) after_update(i, net);
    if (cfg.check_constraints_every > 0 && i % cfg.check_constraints_every == 0)
      assert_feasible(net, i);
  }

  res.iterations = i;
  res.stopped_early = stop && i < cfg.max_iters;
  return res;
}

std::vector<std::pair<std::string, TrainResult>> run_ablation(
    const ExperimentConfig& base, const std::vector<Variant>& variants) {
  if (variants.empty()) fail("ablation needs at least one variant");
  fs::create_directories(base.out_dir);
  std::ofstream combined(base.out_dir + "/ablation.csv", std::ios::trunc);
  if (!combined) fail("cannot open '" + base.out_dir + "/ablation.csv'");
  combined << "variant,iter,loss,lr,wall_ms\n";

  std::vector<std::pair<std::string, TrainResult>> results;
  for (Variant v : variants) {
    ExperimentConfig cfg = base;
    for (LayerConfig& lc : cfg.layers) lc.variant = v;
    const std::string name = to_string(v);
    cfg.out_dir = base.out_dir + "/" + name;
    TrainResult r = run_training(cfg);

    std::ifstream log(r.log_path);
    if (!log) fail("missing per-variant log '" + r.log_path + "'");
    std::string line;
    std::getline(log, line);  // header
    while (std::getline(log, line))
      if (!line.empty()) combined << name << ',' << line << '\n';
    results.emplace_back(name, std::move(r));
  }
  return results;
}

void export_traces(const Network& net, const std::vector<Mat>& xs,
                   const std::string& out_csv) {
  if (xs.empty()) throw std::invalid_argument("export_traces: empty input");
  if (xs[0].cols != 1)
    throw std::invalid_argument("export_traces: traces are single-sequence (batch 1)");
  NetworkCache cache = forward_sequence(net, xs);

  std::ofstream out(out_csv, std::ios::trunc);
  if (!out) fail("cannot open trace output '" + out_csv + "'");
  out << "layer,sublayer,t,neuron,activation\n";
  for (size_t l = 0; l < cache.layer.size(); ++l) {
    const LayerCache& lc = cache.layer[l];
    const bool has_short = variant_has_short(lc.variant);
    const bool has_long = variant_has_long(lc.variant);
    if (has_short)
      for (int t = 1; t <= lc.steps; ++t)
        for (int n = 0; n < lc.neurons; ++n)
          out << (l + 1) << ",short," << t << ',' << n << ','
              << fmt17(lc.h_short_at(t).at(n, 0)) << '\n';
    if (has_long)
      for (int t = 1; t <= lc.steps; ++t)
        for (int n = 0; n < lc.neurons; ++n)
          out << (l + 1) << ",long," << t << ',' << n << ','
              << fmt17(lc.h_long_at(t).at(n, 0)) << '\n';
  }
  if (!out) fail("write failed for '" + out_csv + "'");
}

std::vector<Mat> trace_input(const ExperimentConfig& cfg) {
  Rng rng(cfg.trace_seed);
  if (cfg.task == "adding") return gen_adding(cfg.seq_len, 1, rng).inputs;
  std::vector<Mat> xs(static_cast<size_t>(cfg.seq_len));
  for (Mat& x : xs) {
    x = Mat(1, 1);
    x.at(0, 0) = rng.uniform01();
  }
  return xs;
}

}  // namespace durnn
