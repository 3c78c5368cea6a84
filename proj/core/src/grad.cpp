#include "durnn/grad.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace durnn {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_finite(const Mat& m, int t, const char* what) {
  double sum = 0.0;
  for (double x : m.data) sum += x;
  if (!std::isfinite(sum))
    throw std::runtime_error(std::string("backward pass: non-finite ") + what + " at time step " +
                             std::to_string(t));
}

void check_finite_grads(const LayerGrads& g, int layer_index) {
  double sum = g.g_b_thre;
  for (const Mat* m : {&g.g_w_in, &g.g_w_rec, &g.g_w_ss, &g.g_w_ls, &g.g_w_s})
    for (double x : m->data) sum += x;
  for (const Vec* v : {&g.g_b_short, &g.g_b_s, &g.g_u, &g.g_b_long})
    for (double x : *v) sum += x;
  if (!std::isfinite(sum))
    throw std::runtime_error("backward pass: non-finite parameter gradient in layer " +
                             std::to_string(layer_index + 1));
}

// dst = relu-mask(gate) o src, mask = 1[gate > 0]
void masked_copy(Mat& dst, const Mat& gate, const Mat& src) {
  dst.rows = gate.rows;
  dst.cols = gate.cols;
  dst.data.resize(gate.data.size());
  for (size_t i = 0; i < gate.data.size(); ++i)
    dst.data[i] = gate.data[i] > 0.0 ? src.data[i] : 0.0;
}

}  // namespace

// ===== containers =====

LayerGrads zero_grads(const LayerParams& p) {
  LayerGrads g;
  g.g_w_in = Mat(p.w_in.rows, p.w_in.cols);
  if (!p.w_rec.empty()) g.g_w_rec = Mat(p.w_rec.rows, p.w_rec.cols);
  if (!p.w_ss.empty()) g.g_w_ss = Mat(p.w_ss.rows, p.w_ss.cols);
  if (!p.w_ls.empty()) g.g_w_ls = Mat(p.w_ls.rows, p.w_ls.cols);
  if (!p.w_s.empty()) g.g_w_s = Mat(p.w_s.rows, p.w_s.cols);
  g.g_b_short.assign(p.b_short.size(), 0.0);
  g.g_b_s.assign(p.b_s.size(), 0.0);
  g.g_u.assign(p.u.size(), 0.0);
  g.g_b_long.assign(p.b_long.size(), 0.0);
  g.g_b_thre = 0.0;
  return g;
}

// ===== single-element state recursions =====

Vec backward_state_long(const Vec& g_next, const Vec& local, const Vec& u,
                        const Vec& relu_mask_next) {
  const size_t n = u.size();
  require(g_next.size() == n && local.size() == n && relu_mask_next.size() == n,
          "backward_state_long: size mismatch");
  Vec out(n);
  for (size_t i = 0; i < n; ++i)
    out[i] = std::fma(u[i], relu_mask_next[i] > 0.0 ? g_next[i] : 0.0, local[i]);
  return out;
}

Vec backward_state_short(const Vec& g_long_t, const Vec& s_t, const Mat& w_s,
                         const Vec& relu_mask_long_t, const Vec& g_short_next, const Mat& w_rec,
                         const Vec& relu_mask_short_next) {
  const size_t n = s_t.size();
  require(g_long_t.size() == n && relu_mask_long_t.size() == n && g_short_next.size() == n &&
              relu_mask_short_next.size() == n,
          "backward_state_short: size mismatch");
  Vec masked_next(n);
  for (size_t i = 0; i < n; ++i)
    masked_next[i] = relu_mask_short_next[i] > 0.0 ? g_short_next[i] : 0.0;
  Vec out = matvec_t(w_rec, masked_next);
  Vec masked_long(n);
  for (size_t i = 0; i < n; ++i)
    masked_long[i] = relu_mask_long_t[i] > 0.0 ? g_long_t[i] : 0.0;
  Vec base = matvec_t(w_s, masked_long);
  for (size_t i = 0; i < n; ++i) out[i] = std::fma(s_t[i], base[i], out[i]);
  return out;
}

// ===== batched state pass =====

BackwardStates backward_states(Variant variant, const LayerParams& p, const LayerCache& cache,
                               const std::vector<Mat>& ext) {
  const int n = cache.neurons, b = cache.batch, steps = cache.steps;
  require(static_cast<int>(ext.size()) == steps, "backward_states: ext length != steps");
  require(cache.variant == variant, "backward_states: cache built for a different variant");
  const bool has_long = variant_has_long(variant);
  const bool has_short = variant_has_short(variant);

  BackwardStates st;
  if (has_long) st.g_h_long.assign(steps, Mat());
  if (has_short) st.g_h_short.assign(steps, Mat());
  if (has_long && has_short) st.sel_base.assign(steps, Mat());

  Mat masked;  // scratch
  for (int t = steps; t >= 1; --t) {
    const StepCache& sc = cache.step[t - 1];
    const Mat* ext_t = ext[t - 1].empty() ? nullptr : &ext[t - 1];
    if (ext_t) require(ext_t->rows == n && ext_t->cols == b, "backward_states: ext shape");

    if (has_long) {
      // dL/dh_t = ext + U o relu'_{s,t+1} o dL/dh_{t+1}
      Mat g(n, b);
      const Mat* gh_next = t < steps ? &st.g_h_long[t] : nullptr;
      const Mat* h_next = t < steps ? &cache.step[t].h_long : nullptr;
      for (int i = 0; i < n; ++i) {
        const double ui = p.u[i];
        double* grow = g.row(i);
        const double* erow = (ext_t && has_long) ? ext_t->row(i) : nullptr;
        const double* nrow = gh_next ? gh_next->row(i) : nullptr;
        const double* hrow = h_next ? h_next->row(i) : nullptr;
        for (int j = 0; j < b; ++j) {
          const double mg = nrow && hrow[j] > 0.0 ? nrow[j] : 0.0;
          grow[j] = std::fma(ui, mg, erow ? erow[j] : 0.0);
        }
      }
      check_finite(g, t, "long-state gradient");
      st.g_h_long[t - 1] = std::move(g);
      if (has_short) {
        // sel_base = W_s^T (relu'_{s,t} o dL/dh_t), reused for selection grads
        masked_copy(masked, sc.h_long, st.g_h_long[t - 1]);
        st.sel_base[t - 1] = gemm_tn(p.w_s, masked);
      }
    }

    if (has_short) {
      // dL/dh~_t = S_t o sel_base + W_rec^T (relu'_{f,t+1} o dL/dh~_{t+1})
      Mat g;
      if (t < steps) {
        masked_copy(masked, cache.step[t].h_short, st.g_h_short[t]);
        g = gemm_tn(p.w_rec, masked);
      } else {
        g = Mat(n, b);
      }
      if (has_long) {
        const Mat& base = st.sel_base[t - 1];
        for (size_t i = 0; i < g.data.size(); ++i)
          g.data[i] = std::fma(sc.s.data[i], base.data[i], g.data[i]);
      } else if (ext_t) {
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += ext_t->data[i];
      }
      check_finite(g, t, "short-state gradient");
      st.g_h_short[t - 1] = std::move(g);
    }
  }
  return st;
}

// ===== parameter accumulation =====

LayerGrads accumulate_param_grads(Variant variant, const LayerParams& p, const LayerCache& cache,
                                  const std::vector<Mat>& xs, const BackwardStates& states,
                                  bool want_input_grads) {
  const int n = cache.neurons, b = cache.batch, steps = cache.steps;
  require(static_cast<int>(xs.size()) == steps, "accumulate_param_grads: xs length != steps");
  const bool has_long = variant_has_long(variant);
  const bool has_short = variant_has_short(variant);
  const bool has_sel = variant_has_selection(variant);
  const bool diag_short = variant == Variant::ind_plus_selection;

  LayerGrads g = zero_grads(p);
  if (want_input_grads) g.g_x.assign(steps, Mat());

  Mat mg_l, mg_s, scratch_t, kernel;
  for (int t = steps; t >= 1; --t) {
    const StepCache& sc = cache.step[t - 1];
    const Mat& x_t = xs[t - 1];
    require(x_t.cols == b, "accumulate_param_grads: input batch width mismatch");

    if (has_long) {
      masked_copy(mg_l, sc.h_long, states.g_h_long[t - 1]);  // relu'_s o dL/dh_t
      const Mat& h_prev = cache.h_long_at(t - 1);
      for (int i = 0; i < n; ++i) {
        const double* mrow = mg_l.row(i);
        const double* prow = h_prev.row(i);
        double acc_u = 0.0, acc_b = 0.0;
        for (int j = 0; j < b; ++j) {
          acc_u = std::fma(mrow[j], prow[j], acc_u);
          acc_b += mrow[j];
        }
        g.g_u[i] += acc_u;
        g.g_b_long[i] += acc_b;
      }
      if (has_short) {
        // g_w_s += (relu'_s o dL/dh_t) (S_t o h~_t)^T
        Mat gated = sc.s;
        for (size_t i = 0; i < gated.data.size(); ++i) gated.data[i] *= sc.h_short.data[i];
        transpose_into(scratch_t, gated);
        gemm_acc(g.g_w_s, mg_l, scratch_t);
      } else {
        // long-only variant: the input feeds the long sublayer
        transpose_into(scratch_t, x_t);
        gemm_acc(g.g_w_in, mg_l, scratch_t);
        if (want_input_grads) g.g_x[t - 1] = gemm_tn(p.w_in, mg_l);
      }
    }

    if (has_sel) {
      // K_t = sel_base o h~_t o 1[S_t > 0] o mm'; b_thre kernel omits mm'
      const Mat& base = states.sel_base[t - 1];
      kernel.rows = n;
      kernel.cols = b;
      kernel.data.assign(static_cast<size_t>(n) * b, 0.0);
      for (int i = 0; i < n; ++i) {
        const double* brow = base.row(i);
        const double* hrow = sc.h_short.row(i);
        const double* srow = sc.s.row(i);
        double* krow = kernel.row(i);
        for (int j = 0; j < b; ++j) {
          if (srow[j] <= 0.0) continue;
          const double gap = sc.mm_max[j] - sc.mm_min[j];
          const double prod = brow[j] * hrow[j];
          g.g_b_thre -= prod;
          krow[j] = gap < 1e-12 ? 0.0 : prod * (1.0 / gap);
        }
      }
      transpose_into(scratch_t, sc.h_short);
      gemm_acc(g.g_w_ss, kernel, scratch_t);
      transpose_into(scratch_t, cache.h_long_at(t - 1));
      gemm_acc(g.g_w_ls, kernel, scratch_t);
      for (int i = 0; i < n; ++i) {
        const double* krow = kernel.row(i);
        double acc = 0.0;
        for (int j = 0; j < b; ++j) acc += krow[j];
        g.g_b_s[i] += acc;
      }
    }

    if (has_short) {
      masked_copy(mg_s, sc.h_short, states.g_h_short[t - 1]);  // relu'_f o dL/dh~_t
      const Mat& hs_prev = cache.h_short_at(t - 1);
      if (diag_short) {
        // only the diagonal of w_rec is a parameter
        for (int i = 0; i < n; ++i) {
          const double* mrow = mg_s.row(i);
          const double* prow = hs_prev.row(i);
          double acc = 0.0;
          for (int j = 0; j < b; ++j) acc = std::fma(mrow[j], prow[j], acc);
          g.g_w_rec.at(i, i) += acc;
        }
      } else {
        transpose_into(scratch_t, hs_prev);
        gemm_acc(g.g_w_rec, mg_s, scratch_t);
      }
      transpose_into(scratch_t, x_t);
      gemm_acc(g.g_w_in, mg_s, scratch_t);
      for (int i = 0; i < n; ++i) {
        const double* mrow = mg_s.row(i);
        double acc = 0.0;
        for (int j = 0; j < b; ++j) acc += mrow[j];
        g.g_b_short[i] += acc;
      }
      if (want_input_grads) g.g_x[t - 1] = gemm_tn(p.w_in, mg_s);
    }
  }
  return g;
}

// ===== whole-network backward =====

NetworkGrads backward_sequence(const Network& net, const std::vector<Mat>& xs,
                               const NetworkCache& cache, const std::vector<Mat>& g_top,
                               bool want_input_grads) {
  const int layers = static_cast<int>(net.layers.size());
  require(layers > 0 && static_cast<int>(cache.layer.size()) == layers,
          "backward_sequence: cache/network layer count mismatch");
  require(static_cast<int>(g_top.size()) == cache.steps,
          "backward_sequence: loss-grad count != steps");

  NetworkGrads out;
  out.layers.resize(layers);
  std::vector<Mat> ext = g_top;
  for (int l = layers - 1; l >= 0; --l) {
    const Variant v = net.specs[l].variant;
    const LayerCache& lc = cache.layer[l];
    // layer inputs: raw xs for layer 0, lower layer's outputs above
    std::vector<Mat> layer_in;
    if (l == 0) {
      layer_in = xs;
    } else {
      layer_in.reserve(cache.steps);
      for (int t = 1; t <= cache.steps; ++t) layer_in.push_back(cache.layer[l - 1].output_at(t));
    }
    BackwardStates st = backward_states(v, net.layers[l], lc, ext);
    const bool need_gx = l > 0 || want_input_grads;
    out.layers[l] = accumulate_param_grads(v, net.layers[l], lc, layer_in, st, need_gx);
    check_finite_grads(out.layers[l], l);
    if (l > 0) ext = out.layers[l].g_x;
  }
  return out;
}

std::vector<Mat> loss_grads_at_last(int steps, Mat g_last) {
  require(steps >= 1, "loss_grads_at_last: steps must be positive");
  std::vector<Mat> ext(steps);
  ext[steps - 1] = std::move(g_last);
  return ext;
}

// ===== gradient-propagation probe =====

namespace {

// dS_n = diag(relu'_{s,n}) W_s diag(S_n)
Mat selection_jacobian(const LayerParams& p, const StepCache& sc) {
  const int n = p.w_s.rows;
  Mat j(n, n);
  for (int i = 0; i < n; ++i) {
    if (sc.h_long.at(i, 0) <= 0.0) continue;  // row zeroed by the relu mask
    const double* wrow = p.w_s.row(i);
    double* jrow = j.row(i);
    for (int k = 0; k < n; ++k) jrow[k] = wrow[k] * sc.s.at(k, 0);
  }
  return j;
}

}  // namespace

GradNormReport grad_norm_probe(const LayerParams& p, const LayerCache& cache, int t, int span) {
  require(cache.batch == 1, "grad_norm_probe: trajectory must be batch-1");
  require(variant_has_long(cache.variant) && variant_has_short(cache.variant),
          "grad_norm_probe: needs both sublayers");
  require(t >= 1 && t <= cache.steps, "grad_norm_probe: t out of range");
  require(span >= 1 && span <= t, "grad_norm_probe: span must lie in [1, t]");
  const int n = cache.neurons;

  GradNormReport rep;
  rep.long_norms.assign(span, 0.0);
  rep.mixed_norms.assign(std::min(span, t - 1), 0.0);

  // s_max = max ||dS_n||_2 over the probed window
  for (int m = std::max(1, t - span); m <= t; ++m)
    rep.s_max = std::max(rep.s_max, spectral_norm(selection_jacobian(p, cache.step[m - 1])));

  // long path: diagonal running product prod_i = prod_{m=t-k+1..t} U_i relu'_{s,m,i}
  Vec dprod(n, 1.0);
  // mixed path: G(0) = dS_t, G(k) = G(k-1) A_{t-k+1} + diag(dprod_k) dS_{t-k}
  Mat g_mix = selection_jacobian(p, cache.step[t - 1]);
  Mat a(n, n), g_next(n, n);
  for (int k = 1; k <= span; ++k) {
    const int m = t - k + 1;  // step whose Jacobian factor enters at this k
    const StepCache& sc_m = cache.step[m - 1];
    for (int i = 0; i < n; ++i) dprod[i] *= sc_m.h_long.at(i, 0) > 0.0 ? p.u[i] : 0.0;
    double worst = 0.0;
    for (double d : dprod) worst = std::max(worst, std::fabs(d));
    rep.long_norms[k - 1] = worst;

    if (t - k >= 1) {
      // A_m = diag(relu'_{f,m}) W_rec
      for (int i = 0; i < n; ++i) {
        const bool active = sc_m.h_short.at(i, 0) > 0.0;
        const double* wrow = p.w_rec.row(i);
        double* arow = a.row(i);
        for (int c = 0; c < n; ++c) arow[c] = active ? wrow[c] : 0.0;
      }
      gemm_into(g_next, g_mix, a);
      Mat ds = selection_jacobian(p, cache.step[t - k - 1]);
      for (int i = 0; i < n; ++i) {
        const double di = dprod[i];
        double* grow = g_next.row(i);
        const double* drow = ds.row(i);
        for (int c = 0; c < n; ++c) grow[c] = std::fma(di, drow[c], grow[c]);
      }
      g_mix = g_next;
      rep.mixed_norms[k - 1] = spectral_norm(g_mix);
    }
  }
  return rep;
}

}  // namespace durnn
