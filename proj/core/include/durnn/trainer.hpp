// ===== durnn/trainer.hpp =====
//
// The training loop: batch -> forward -> loss -> backward -> Adam step ->
// constraint projection, with CSV metric logs (`iter,loss,lr,wall_ms`),
// cadenced checkpoints, deterministic seeded RNG streams (separate init /
// train / eval streams derived from the config seed), resume with a
// config-hash gate, variant ablation under a shared data stream, and
// activation-trace export. Single-threaded; two runs with the same config
// and seed reproduce losses, checkpoints, and logs bitwise (wall_ms excepted,
// being wall-clock time).

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "durnn/cell.hpp"
#include "durnn/config.hpp"

namespace durnn {

struct TrainResult {
  long iterations = 0;           // updates completed when the run ended
  double final_eval_loss = 0.0;  // last logged evaluation loss
  double best_eval_loss = 0.0;
  long achieved_iter = -1;       // first eval with loss < stop_at_loss
  double final_test_err = -1.0;  // pixel tasks: last full test-set error rate
  long test_achieved_iter = -1;  // first eval with test error < stop_at_test_err
  bool stopped_early = false;
  std::string log_path, ckpt_path;
};

// Called after every parameter update and projection; iter counts completed
// updates. Used by the acceptance harness to watch constraints per update.
using UpdateHook = std::function<void(long iter, const Network& net)>;

// Evaluates (and logs) at iteration 0, every eval_interval, and at the end;
// checkpoints after the eval at ckpt_interval multiples and always on exit,
// so resuming from the written checkpoint continues an uninterrupted run
// bitwise. Numerical failures abort with the last-good checkpoint retained
// on disk. Throws on unreadable data, a resume config mismatch, or a
// constraint violation at the spot-check cadence.
TrainResult run_training(const ExperimentConfig& cfg, const std::string& resume_path = {},
                         const UpdateHook& after_update = {});

// Trains each variant under the identical config and seed — the data stream
// is shared, so every variant sees the same batches — and merges the per-
// variant logs into <out_dir>/ablation.csv keyed by a leading variant column.
std::vector<std::pair<std::string, TrainResult>> run_ablation(
    const ExperimentConfig& base, const std::vector<Variant>& variants);

// One row per (layer, present sublayer, step, neuron), header
// `layer,sublayer,t,neuron,activation`; xs must be a single sequence
// (batch 1). A network whose layers all have both sublayers emits
// layers x 2 x steps x neurons rows.
void export_traces(const Network& net, const std::vector<Mat>& xs,
                   const std::string& out_csv);

// The input sequence a trace export feeds the model, drawn from trace_seed:
// one adding-problem sequence, or uniform pixels for the pixel tasks.
std::vector<Mat> trace_input(const ExperimentConfig& cfg);

}  // namespace durnn
