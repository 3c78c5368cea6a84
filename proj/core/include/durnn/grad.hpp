// ===== durnn/grad.hpp =====
//
// Hand-derived truncated backpropagation through time for the dual-memory
// cell. The selection weights S_t are treated as constants with respect to
// h~_t and h_{t-1} (truncation), which makes the backward pass a pair of
// linear state recursions:
//
//   dL/dh_t  = ext_t + U o relu'_{s,t+1} o dL/dh_{t+1}
//   dL/dh~_t = S_t o (W_s^T (relu'_{s,t} o dL/dh_t))
//              + W_rec^T (relu'_{f,t+1} o dL/dh~_{t+1})
//
// relu' masks are indicators (output > 0) read straight off the forward
// cache. Accumulation order is fixed — time steps descending, then row-major
// over the N x B block — so gradients are bit-reproducible.

#pragma once

#include <vector>

#include "durnn/cell.hpp"
#include "durnn/linalg.hpp"

namespace durnn {

// ===== gradient containers =====

struct LayerGrads {
  Mat g_w_in, g_w_rec, g_w_ss, g_w_ls, g_w_s;  // empty when the variant lacks the tensor
  Vec g_b_short, g_b_s, g_u, g_b_long;
  double g_b_thre = 0.0;
  std::vector<Mat> g_x;  // per-step input gradients (filled on request / for stacking)
};

// Zero gradients shaped like the live tensors of `p`.
LayerGrads zero_grads(const LayerParams& p);

struct NetworkGrads {
  std::vector<LayerGrads> layers;
};

// ===== single-element state recursions =====
// Reference (batch-1) forms of the two recursions; the batched engine below
// produces bitwise-identical columns.

// dL/dh_t = local + U o mask_next o g_next  (no path through S_{t+1})
Vec backward_state_long(const Vec& g_next, const Vec& local, const Vec& u,
                        const Vec& relu_mask_next);

// dL/dh~_t = S_t o (W_s^T (mask_long o g_long)) + W_rec^T (mask_short_next o g_short_next)
Vec backward_state_short(const Vec& g_long_t, const Vec& s_t, const Mat& w_s,
                         const Vec& relu_mask_long_t, const Vec& g_short_next, const Mat& w_rec,
                         const Vec& relu_mask_short_next);

// ===== batched backward over one layer =====

// Per-step state gradients, index t-1 holds time step t. sel_base caches
// W_s^T (relu'_{s,t} o dL/dh_t), reused by the selection parameter formulas.
struct BackwardStates {
  std::vector<Mat> g_h_long;
  std::vector<Mat> g_h_short;
  std::vector<Mat> sel_base;
};

// ext[t-1] is the externally injected dL/d(output_t) (N x B); empty Mat means
// zero. Runs t = L..1. Throws std::invalid_argument on shape mismatch and
// std::runtime_error naming the step on non-finite values.
BackwardStates backward_states(Variant variant, const LayerParams& p, const LayerCache& cache,
                               const std::vector<Mat>& ext);

// Parameter-gradient accumulation over all steps (t descending):
//   g_u      = sum_t relu'_s o dL/dh_t o h_{t-1}
//   g_w_rec  = sum_t (relu'_f o dL/dh~_t) h~_{t-1}^T   (diagonal only for the
//              independent-short variant)
//   g_w_in   = sum_t (relu'_f o dL/dh~_t) x_t^T        (long-only variant: relu'_s o dL/dh_t)
//   g_w_s    = sum_t (relu'_s o dL/dh_t) (S_t o h~_t)^T
//   K_t      = sel_base_t o h~_t o 1[S_t > 0] o mm'    (mm' = 1/(max-min), 0 degenerate)
//   g_w_ss   = sum_t K_t h~_t^T;  g_w_ls = sum_t K_t h_{t-1}^T;  g_b_s = sum_t sum_b K_t
//   g_b_thre = -sum_t sum_{i,b} sel_base_t o h~_t o 1[S_t > 0]   (no mm' factor)
//   g_b_long = sum_t sum_b relu'_s o dL/dh_t;  g_b_short = sum_t sum_b relu'_f o dL/dh~_t
// When want_input_grads, also fills g_x[t-1] = W_in^T (relu'_f o dL/dh~_t)
// (long-only variant: W_in^T (relu'_s o dL/dh_t)).
LayerGrads accumulate_param_grads(Variant variant, const LayerParams& p, const LayerCache& cache,
                                  const std::vector<Mat>& xs, const BackwardStates& states,
                                  bool want_input_grads);

// ===== whole-network backward =====

// g_top[t-1] is dL/d(top layer output at step t); empty means zero. Each
// layer's g_x becomes the layer below's injection. g_x of layer 0 is filled
// only when want_input_grads.
NetworkGrads backward_sequence(const Network& net, const std::vector<Mat>& xs,
                               const NetworkCache& cache, const std::vector<Mat>& g_top,
                               bool want_input_grads = false);

// Convenience: injection only at the final step.
std::vector<Mat> loss_grads_at_last(int steps, Mat g_last);

// ===== gradient-propagation probe =====

// Jacobian norms along a recorded batch-1 trajectory, ending at step t:
//   long_norms[k-1]  = ||dh_t/dh_{t-k}||_2,  k = 1..span (diagonal product)
//   mixed_norms[k-1] = ||dh_t/dh~_{t-k}||_2, k = 1..min(span, t-1), via
//     G(0) = dS_t,  G(k) = G(k-1) A_{t-k+1} + LongProd(t-k+1..t) dS_{t-k},
//     A_n = relu'_{f,n} rows of W_rec,  dS_n = relu'_{s,n} rows / S_n columns of W_s
//   s_max = max_n ||dS_n||_2 over n in [max(1, t-span), t]
struct GradNormReport {
  Vec long_norms;
  Vec mixed_norms;
  double s_max = 0.0;
};
GradNormReport grad_norm_probe(const LayerParams& p, const LayerCache& cache, int t, int span);

}  // namespace durnn
