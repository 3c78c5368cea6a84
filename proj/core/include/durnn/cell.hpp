#pragma once

// Forward computation of the dual recurrent cell:
//   h~_t = relu(W_in x_t + W_rec h~_{t-1} + b_short)          (short sublayer)
//   S_t  = relu(mm(W_ss h~_t + W_ls h_{t-1} + b_s) - b_thre)  (channel selection)
//   i_t  = S_t o h~_t
//   h_t  = relu(W_s i_t + U o h_{t-1} + b_long)               (long sublayer)
// with mm the per-sample min-max normalization. Ablation variants, multi-layer
// stacking and the task readout heads live here too.
//
// Batched layout: states are N x B matrices (neurons by batch); the cache
// stores per-step outputs only — relu masks are recoverable as (output > 0)
// because the derivative at exactly 0 is defined as 0.

#include <string>
#include <vector>

#include "durnn/linalg.hpp"

namespace durnn {

// ===== layer description =====

enum class Variant {
  durnn,              // both sublayers + selection
  no_selection,       // S_t == 1 (clipped relu RNN feeding an independent layer)
  ind_plus_selection, // short sublayer independent too (diagonal recurrence)
  rnn_relu,           // short sublayer only; layer output is h~_t
  indrnn,             // long sublayer only
};

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);
bool variant_has_short(Variant v);
bool variant_has_long(Variant v);
bool variant_has_selection(Variant v);

struct ConstraintSpec {
  double delta = 0.5;      // sigma_max bound on w_rec
  double u_low = 0.0;      // epsilon^(1/L), or 0 when eased (non-final layers)
  double u_high = 1.0;     // gamma^(1/L)
  double thre_low = 0.0;   // b_thre clamp interval
  double thre_high = 1.0;
};

// delta = 0.5^(1/L); u interval [eps^(1/L), gamma^(1/L)] with the lower end
// eased to 0 for non-final layers.
ConstraintSpec make_constraints(double epsilon, double gamma, int seq_len, bool final_layer);

struct LayerSpec {
  int neurons = 0;    // N
  int input_dim = 0;  // M
  Variant variant = Variant::durnn;
  ConstraintSpec constraints;
  bool train_b_s = true;  // strict-paper mode freezes b_s when false
};

struct LayerParams {
  Mat w_in;          // N x M
  Mat w_rec;         // N x N (diagonal holds the independent weights for ind_plus_selection)
  Vec b_short;       // N
  Mat w_ss;          // N x N
  Mat w_ls;          // N x N
  Vec b_s;           // N
  double b_thre = 0.0;
  Mat w_s;           // N x N
  Vec u;             // N
  Vec b_long;        // N
};

// Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) for the dense weights, w_rec
// immediately projected to sigma_max <= delta, u uniform over
// [max(u_low, 0.9), min(u_high, 1)], biases 0, b_thre 0.1. Draw order is part
// of the determinism contract: w_in, w_rec, w_ss, w_ls, w_s, u (row-major,
// only the tensors the variant uses).
LayerParams init_layer(const LayerSpec& spec, Rng& rng);

// ===== forward cache =====

struct StepCache {
  Mat h_short;  // N x B (empty when the variant has no short sublayer)
  Mat h_long;   // N x B (empty when the variant has no long sublayer)
  Mat s;        // N x B selection weights (empty without selection; ones for no_selection)
  Vec mm_min, mm_max;  // per batch column
  // recorded only when record_pre is set (oracle / finite-difference support)
  Mat pre_short, sel_pre, pre_long;
};

struct LayerCache {
  Variant variant = Variant::durnn;
  int neurons = 0, batch = 0, steps = 0;
  bool record_pre = false;
  std::vector<StepCache> step;  // index t-1 holds time step t

  // zero-state view for t = 0
  const Mat& h_short_at(int t) const { return t == 0 ? zero_state : step[t - 1].h_short; }
  const Mat& h_long_at(int t) const { return t == 0 ? zero_state : step[t - 1].h_long; }
  // the sequence this layer feeds upward: h_t, or h~_t for rnn_relu
  const Mat& output_at(int t) const {
    return variant == Variant::rnn_relu ? h_short_at(t) : h_long_at(t);
  }
  Mat zero_state;  // N x B zeros
};

// ===== single-layer forward =====

// Column-wise min-max normalization over the N entries of each batch column;
// degenerate columns (max - min < 1e-12) are zeroed. Overwrites z.
void min_max_normalize_cols(Mat& z, Vec& mm_min, Vec& mm_max);

// Vec form; returns the normalized vector and the min/max used.
Vec min_max_normalize(const Vec& v, double& mn, double& mx);

// S_t for one element; sel_pre (if non-null) receives W_ss h~ + W_ls h_prev + b_s.
Vec selection_weights(const LayerParams& p, const Vec& h_short, const Vec& h_long_prev,
                      double& mm_min, double& mm_max, Vec* sel_pre = nullptr);

// One batched step. x_t is M x B, previous states N x B (empty treated as zero
// only via LayerCache accessors — callers pass real matrices). Fills `out`.
// Throws std::invalid_argument on shape mismatch and std::runtime_error naming
// the step if a non-finite value appears.
void forward_step_batch(Variant variant, const LayerParams& p, const Mat& x_t,
                        const Mat& h_short_prev, const Mat& h_long_prev, int t,
                        StepCache& out, bool record_pre);

// Vec form of one step (wraps a width-1 batch; bitwise equal to the batched
// path by the linalg determinism contract).
struct StepResult {
  Vec h_short, h_long;
  StepCache cache;
};
StepResult forward_step(const LayerParams& p, const Vec& x_t, const Vec& h_short_prev,
                        const Vec& h_long_prev, Variant variant);

// ===== network =====

struct ReadoutParams {
  Mat w_out;  // K x N
  Vec b_out;  // K
};
ReadoutParams init_readout(int out_dim, int neurons, double bias_init, Rng& rng);

struct Network {
  std::vector<LayerSpec> specs;
  std::vector<LayerParams> layers;
  ReadoutParams head;
};

// Layers drawn in order, then the head; single source of the init draw order.
Network init_network(const std::vector<LayerSpec>& specs, int out_dim, double readout_bias_init,
                     Rng& rng);

struct NetworkCache {
  std::vector<LayerCache> layer;
  int steps = 0, batch = 0;
};

// xs: per-step M x B inputs, t = 1..L at index t-1. Layer l >= 2 consumes the
// output sequence of layer l-1.
NetworkCache forward_sequence(const Network& net, const std::vector<Mat>& xs,
                              bool record_pre = false);

// ===== readout heads =====
// Losses are batch means; gradients are with respect to the mean.

struct RegressionReadout {
  double loss = 0.0;
  Vec pred;   // B
  Mat g_h;    // N x B, dLoss/dh_last
  Mat g_w_out;
  Vec g_b_out;
};
RegressionReadout readout_regression(const ReadoutParams& head, const Mat& h_last,
                                     const Vec& targets);

struct ClassificationReadout {
  double loss = 0.0;
  int correct = 0;
  Mat g_h;
  Mat g_w_out;
  Vec g_b_out;
};
ClassificationReadout readout_classification(const ReadoutParams& head, const Mat& h_last,
                                             const std::vector<int>& labels);

}  // namespace durnn
