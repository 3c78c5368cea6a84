// ===== durnn/optim.hpp =====
//
// Adam with bias correction, a step-decay (or plateau) learning-rate
// schedule, and the post-update constraint projections: singular values of
// the short-term recurrence clipped to delta, the long-term recurrent weights
// clamped to [u_low, u_high], and the selection threshold clamped to [0, 1].
// Projection runs after every optimizer step so the gradient-propagation
// bounds hold throughout training, not just at checkpoints.

#pragma once

#include <string>
#include <vector>

#include "durnn/cell.hpp"
#include "durnn/grad.hpp"
#include "durnn/linalg.hpp"

namespace durnn {

// ===== parameter traversal =====

// A named view of one trainable tensor. The traversal order is fixed (layers
// bottom-up, tensors in declaration order, then the readout) and shared by
// the optimizer and the checkpoint format.
struct TensorRef {
  std::string name;
  double* data = nullptr;
  size_t count = 0;
  int rows = 0, cols = 0;  // vectors are n x 1, scalars 1 x 1
};

// Skips tensors the variant does not use; includes b_s only when the layer
// trains it. b_thre is a single scalar slot.
std::vector<TensorRef> collect_params(Network& net);
std::vector<TensorRef> collect_grads(Network& net, NetworkGrads& grads, Mat& g_w_out,
                                     Vec& g_b_out);

// ===== Adam =====

struct AdamState {
  std::vector<Vec> m, v;  // one slab per TensorRef, same order
  long step_count = 0;
  double beta1 = 0.9, beta2 = 0.999, eps_hat = 1e-8;
};

AdamState make_adam(const std::vector<TensorRef>& params);

// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps_hat). Throws
// std::runtime_error naming the tensor if an update goes non-finite.
void adam_step(AdamState& state, const std::vector<TensorRef>& params,
               const std::vector<TensorRef>& grads, double lr);

// ===== constraint projection =====

// w_rec: singular values clipped to delta (independent-short variant: the
// diagonal clamped to [u_low, u_high], off-diagonal zeroed); u clamped to
// [u_low, u_high]; b_thre clamped to [0, 1]. Other tensors untouched. Tensor
// storage is preserved, so TensorRefs collected earlier remain valid.
void project_constraints(LayerParams& p, const ConstraintSpec& spec, Variant variant);
void project_constraints(Network& net);

// Largest violation across the network (0 when feasible); used by the
// training loop's per-iteration assertion.
double constraint_violation(const Network& net);

// ===== learning-rate schedule =====

struct LrSchedule {
  double initial_lr = 2e-4;
  double decay_factor = 0.1;
  int decay_every = 20000;   // fixed mode: iterations per decay
  bool plateau_mode = false; // decay when the metric stalls instead
  int patience = 5;          // plateau evaluations without improvement

  // plateau-mode state
  double best_metric = 0.0;
  bool has_best = false;
  int stale = 0;
  double plateau_scale = 1.0;
};

// Fixed mode: initial * decay^floor(iter / decay_every), pure. Plateau mode:
// feed the validation metric (lower is better) at each evaluation point.
double schedule_lr(const LrSchedule& sched, long iteration);
double schedule_lr_plateau(LrSchedule& sched, double metric);

}  // namespace durnn
