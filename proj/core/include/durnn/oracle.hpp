// ===== durnn/oracle.hpp =====
//
// Independent verification engines for the hand-derived backward pass.
//
//  * appendix_grads — closed-form gradient sums. Each parameter gradient is
//    assembled term by term over loss steps and split points: double sums
//    (loss step t, landing step k) for the long-sublayer and selection
//    parameters, triple sums (t, crossover step m, landing step k) for the
//    short-sublayer parameters, with every Jacobian factor chain rebuilt per
//    term — no iterative reuse of partial state. Same truncation semantics as
//    the grad module (no path through S_t into the states), so the two must
//    agree to rounding; cost is O(L^3) chains, so instance sizes are capped.
//  * finite_diff_frozen — central differences of the frozen loss: every
//    layer's selection weights are pinned to a recorded base run (for the
//    selection parameters themselves, that layer instead recomputes S_t from
//    the perturbed parameters with its inputs and min-max bounds pinned).
//    This makes the numeric derivative match the truncated analytic one
//    instead of the full-graph derivative.
//  * bound_check — asserts the gradient-control bounds along a recorded
//    trajectory: mixed-path spectral norms below s*gamma/(1-delta), long-path
//    norms below gamma and, on all-active stretches, above epsilon.

#pragma once

#include <limits>
#include <string>
#include <vector>

#include "durnn/cell.hpp"
#include "durnn/grad.hpp"
#include "durnn/linalg.hpp"

namespace durnn {

// ===== comparison report =====

struct OracleEntry {
  std::string param;           // tensor name ("layer1.w_rec") or check label
  double max_abs_err = 0.0;    // worst absolute deviation
  double max_rel_err = 0.0;    // worst relative deviation (see compare_grads)
  int row = -1, col = -1;      // location of the worst relative deviation
  double measured = 0.0;       // bound checks: observed value and its limit
  double limit = 0.0;
  bool pass = true;
};

struct OracleReport {
  double tolerance = 0.0;
  bool pass = true;            // every entry passed
  std::vector<OracleEntry> entries;
};

// Per-tensor worst-case comparison. Relative error of a pair (a, b) is
// |a - b| / max(|a|, |b|, 1e-3 * tensor_max, 1e-30) with tensor_max the
// largest magnitude in either tensor, so near-zero entries of an otherwise
// healthy tensor are judged against the tensor's own scale. Input gradients
// (g_x) are plumbing and excluded.
OracleReport compare_grads(const LayerGrads& a, const LayerGrads& b, double tolerance,
                           const std::string& prefix = "");
OracleReport compare_grads(const NetworkGrads& a, const NetworkGrads& b, double tolerance);

// ===== closed-form gradient sums =====

// Single layer. ext[t-1] is dL/d(output_t), empty meaning zero; xs are this
// layer's inputs. Caps: neurons <= 8, steps <= 10 (triple-sum cost), enforced
// with std::invalid_argument.
LayerGrads appendix_grads(Variant variant, const LayerParams& p, const LayerCache& cache,
                          const std::vector<Mat>& xs, const std::vector<Mat>& ext,
                          bool want_input_grads = false);

// Stacked network: layers are processed top to bottom, each handled by the
// closed-form sums and feeding its per-step input gradients to the layer
// below — the composed-network counterpart of backward_sequence.
NetworkGrads appendix_grads(const Network& net, const std::vector<Mat>& xs,
                            const NetworkCache& cache, const std::vector<Mat>& g_top);

// ===== frozen-loss finite differences =====

// Regression loss (squared error at the last step, batch mean) of a forward
// pass with selection pinned to `base`. When recompute_selection_layer >= 0,
// that layer recomputes S_t from its (possibly perturbed) selection
// parameters while pinning the selection inputs h~_t, h_{t-1} and the
// min-max bounds to the base run — exactly the dependence the truncated
// formulas differentiate. With unperturbed parameters this reproduces the
// base run bitwise in both modes.
double frozen_loss_regression(const Network& net, const std::vector<Mat>& xs, const Vec& targets,
                              const NetworkCache& base, int recompute_selection_layer = -1);

struct ParamSelector {
  int layer = 0;      // 0-based; ignored for w_out / b_out
  std::string name;   // w_in|w_rec|b_short|w_ss|w_ls|b_s|b_thre|w_s|u|b_long|w_out|b_out
};

// Central differences (lp - lm) / (2 step) of the frozen loss for one tensor;
// step must lie in [1e-7, 1e-3]. Vectors come back n x 1, b_thre 1 x 1.
// Selection parameters automatically use the recompute-selection mode.
Mat finite_diff_frozen(const Network& net, const std::vector<Mat>& xs, const Vec& targets,
                       const ParamSelector& sel, double step);

// Kink margins of a recorded trajectory (requires record_pre): `pre` is the
// smallest |pre-activation| over both sublayers plus the selection relu
// (|mm(z) - b_thre|), `mm_gap` the smallest min-max spread. Finite
// differencing is only trustworthy when both clear the step size comfortably.
struct KinkMargins {
  double pre = std::numeric_limits<double>::infinity();
  double mm_gap = std::numeric_limits<double>::infinity();
};
KinkMargins kink_margins(const Network& net, const NetworkCache& cache);

// Draws (network, inputs, targets) instances until the recorded trajectory
// clears both margins (> 1e-3); throws std::runtime_error after 100 attempts.
// Selection layers need neurons >= 2 or the min-max gap is always degenerate.
struct FdInstance {
  Network net;
  std::vector<Mat> xs;
  Vec targets;
};
FdInstance sample_kink_guarded(const std::vector<LayerSpec>& specs, int steps, int batch,
                               Rng& rng);

// ===== gradient-control bounds =====

// Wraps grad_norm_probe at t = steps on a batch-1 trajectory of a
// full-recurrence layer. Report entries: the constraint preconditions
// (sigma_max(w_rec) <= delta, u inside its interval), the long-path upper
// bound gamma, the mixed-path upper bound s_max * gamma / (1 - delta), and —
// when cons.u_low > 0 and some neuron stays active through a whole window —
// the long-path floor epsilon. `span` must not exceed the sequence length the
// constraint interval was derived for.
OracleReport bound_check(const LayerParams& p, const ConstraintSpec& cons, const LayerCache& cache,
                         int span, double epsilon, double gamma);

}  // namespace durnn
