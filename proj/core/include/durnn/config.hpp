// ===== durnn/config.hpp =====
//
// Experiment configuration: a flat `key = value` text format with dotted
// per-layer keys (layer.1.neurons = 128). Parsing is strict — unknown keys,
// duplicates, malformed values and out-of-range layer indices all fail with
// the offending line number. serialize_config emits a canonical form
// (fixed key order, %.17g doubles) that round-trips losslessly and feeds the
// config hash stored in checkpoints.

#pragma once

#include <string>
#include <vector>

#include "durnn/cell.hpp"

namespace durnn {

struct LayerConfig {
  int neurons = 128;
  Variant variant = Variant::durnn;
  bool operator==(const LayerConfig&) const = default;
};

struct ExperimentConfig {
  std::string task = "adding";  // adding | mnist | pmnist
  int seq_len = 100;
  int batch = 50;
  long max_iters = 20000;
  long eval_interval = 100;     // evaluation / logging cadence
  int eval_batches = 20;        // fresh batches averaged per evaluation
  unsigned long long seed = 1;

  double lr = 2e-4;
  double lr_decay = 0.1;
  long lr_decay_every = 20000;

  double epsilon = 0.5;  // long-path floor over seq_len steps
  double gamma = 2.0;    // long-path ceiling over seq_len steps
  double delta = 0.0;    // sigma_max cap on w_rec; 0 derives 0.5^(1/seq_len)

  std::vector<LayerConfig> layers{{}};
  bool train_b_s = true;
  // 1.0 predicts the adding-task target mean, so the untrained MSE sits at
  // the 1/6 baseline; classification configs override to 0.
  double readout_bias_init = 1.0;

  std::string out_dir = "runs/out";
  long ckpt_interval = 5000;           // 0 = final checkpoint only
  double stop_at_loss = 0.0;           // 0 = disabled
  long check_constraints_every = 100;  // spot-assert cadence; 0 = disabled

  std::string data_dir = "data";
  int mnist_train_subset = 10000;
  unsigned long long permute_seed = 92;  // pixel permutation for pmnist
  int threads = 1;                       // this build is single-threaded
  long test_eval_every = 1000;           // mnist: full test-set cadence
  double stop_at_test_err = 0.0;         // 0 = disabled
  unsigned long long trace_seed = 7;     // input drawn for trace export

  bool operator==(const ExperimentConfig&) const = default;
};

// Throws std::invalid_argument naming the line for syntax errors and the key
// for semantic ones. parse_config(serialize_config(c)) == c.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& c);

// 64-bit FNV-1a over the canonical serialization.
unsigned long long config_hash(const ExperimentConfig& c);

// Hash over the fields that shape the training computation itself. Pure
// bookkeeping — out_dir, max_iters, checkpoint cadence, stop thresholds, the
// constraint spot-check cadence, trace_seed — is normalized away, so a resume
// may extend a run or redirect its output but never alter what gets computed.
unsigned long long resume_hash(const ExperimentConfig& c);

// Task geometry: adding feeds (value, marker) pairs to one output; the pixel
// tasks feed one pixel per step to ten logits.
int config_input_dim(const ExperimentConfig& c);
int config_out_dim(const ExperimentConfig& c);

// Layer specs with chained input widths and derived constraints; only the
// final layer carries the u floor (epsilon^(1/L)), earlier layers are eased.
std::vector<LayerSpec> build_layer_specs(const ExperimentConfig& c);

}  // namespace durnn
