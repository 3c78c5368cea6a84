#include "durnn/oracle.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace durnn {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// dst = relu-mask(gate) o src, mask = 1[gate > 0]
void masked_copy(Mat& dst, const Mat& gate, const Mat& src) {
  dst.rows = gate.rows;
  dst.cols = gate.cols;
  dst.data.resize(gate.data.size());
  for (size_t i = 0; i < gate.data.size(); ++i)
    dst.data[i] = gate.data[i] > 0.0 ? src.data[i] : 0.0;
}

void acc_into(Mat& dst, Mat src) {
  if (dst.empty()) {
    dst = std::move(src);
    return;
  }
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

// ===== comparison report =====

namespace {

void compare_tensor(OracleReport& rep, const std::string& name, const double* a, const double* b,
                    int rows, int cols) {
  const size_t count = static_cast<size_t>(rows) * cols;
  double tensor_max = 0.0;
  for (size_t i = 0; i < count; ++i)
    tensor_max = std::max({tensor_max, std::fabs(a[i]), std::fabs(b[i])});
  const double scale_floor = std::max(1e-3 * tensor_max, 1e-30);

  OracleEntry e;
  e.param = name;
  for (size_t i = 0; i < count; ++i) {
    const double abs_err = std::fabs(a[i] - b[i]);
    const double rel_err = abs_err / std::max({std::fabs(a[i]), std::fabs(b[i]), scale_floor});
    e.max_abs_err = std::max(e.max_abs_err, abs_err);
    if (rel_err > e.max_rel_err) {
      e.max_rel_err = rel_err;
      e.row = static_cast<int>(i) / cols;
      e.col = static_cast<int>(i) % cols;
    }
  }
  e.pass = e.max_rel_err <= rep.tolerance;
  rep.pass = rep.pass && e.pass;
  rep.entries.push_back(std::move(e));
}

void compare_mat(OracleReport& rep, const std::string& name, const Mat& a, const Mat& b) {
  if (a.empty() && b.empty()) return;
  require(a.rows == b.rows && a.cols == b.cols, "compare_grads: tensor shape mismatch");
  compare_tensor(rep, name, a.data.data(), b.data.data(), a.rows, a.cols);
}

void compare_vec(OracleReport& rep, const std::string& name, const Vec& a, const Vec& b) {
  if (a.empty() && b.empty()) return;
  require(a.size() == b.size(), "compare_grads: vector size mismatch");
  compare_tensor(rep, name, a.data(), b.data(), static_cast<int>(a.size()), 1);
}

}  // namespace

OracleReport compare_grads(const LayerGrads& a, const LayerGrads& b, double tolerance,
                           const std::string& prefix) {
  OracleReport rep;
  rep.tolerance = tolerance;
  compare_mat(rep, prefix + "w_in", a.g_w_in, b.g_w_in);
  compare_mat(rep, prefix + "w_rec", a.g_w_rec, b.g_w_rec);
  compare_vec(rep, prefix + "b_short", a.g_b_short, b.g_b_short);
  compare_mat(rep, prefix + "w_ss", a.g_w_ss, b.g_w_ss);
  compare_mat(rep, prefix + "w_ls", a.g_w_ls, b.g_w_ls);
  compare_vec(rep, prefix + "b_s", a.g_b_s, b.g_b_s);
  if (!a.g_w_ss.empty())
    compare_tensor(rep, prefix + "b_thre", &a.g_b_thre, &b.g_b_thre, 1, 1);
  compare_mat(rep, prefix + "w_s", a.g_w_s, b.g_w_s);
  compare_vec(rep, prefix + "u", a.g_u, b.g_u);
  compare_vec(rep, prefix + "b_long", a.g_b_long, b.g_b_long);
  return rep;
}

OracleReport compare_grads(const NetworkGrads& a, const NetworkGrads& b, double tolerance) {
  require(a.layers.size() == b.layers.size(), "compare_grads: layer count mismatch");
  OracleReport rep;
  rep.tolerance = tolerance;
  for (size_t l = 0; l < a.layers.size(); ++l) {
    OracleReport one = compare_grads(a.layers[l], b.layers[l], tolerance,
                                     "layer" + std::to_string(l + 1) + ".");
    for (auto& e : one.entries) rep.entries.push_back(std::move(e));
    rep.pass = rep.pass && one.pass;
  }
  return rep;
}

// ===== closed-form gradient sums =====

namespace {

// adjoint of prod_{i=k+1}^{t} diag(U o relu'_{s,i}) applied to seed,
// rebuilt from scratch on every call
Mat long_chain_adjoint(const LayerParams& p, const LayerCache& cache, int k, int t,
                       const Mat& seed) {
  Mat g = seed;
  for (int i = t; i >= k + 1; --i) {
    const Mat& gate = cache.step[i - 1].h_long;
    for (int r = 0; r < g.rows; ++r) {
      const double ui = p.u[r];
      const double* grate = gate.row(r);
      double* grow = g.row(r);
      for (int c = 0; c < g.cols; ++c) grow[c] = grate[c] > 0.0 ? ui * grow[c] : 0.0;
    }
  }
  return g;
}

// adjoint of prod_{i=k+1}^{m} diag(relu'_{f,i}) W_rec applied to seed:
// g <- W_rec^T (relu'_{f,i} o g) for i = m down to k+1
Mat short_chain_adjoint(const LayerParams& p, const LayerCache& cache, int k, int m,
                        const Mat& seed) {
  Mat g = seed;
  Mat masked;
  for (int i = m; i >= k + 1; --i) {
    masked_copy(masked, cache.step[i - 1].h_short, g);
    g = gemm_tn(p.w_rec, masked);
  }
  return g;
}

// one double-sum term landing at long step k; mg = relu'_{s,k} o (chained grad)
void add_long_term(LayerGrads& g, Variant variant, const LayerParams& p, const LayerCache& cache,
                   const std::vector<Mat>& xs, int k, const Mat& mg, bool want_input_grads,
                   Mat& scratch_t, Mat& kernel) {
  const int n = cache.neurons, b = cache.batch;
  const StepCache& sc = cache.step[k - 1];
  const Mat& h_prev = cache.h_long_at(k - 1);

  for (int i = 0; i < n; ++i) {
    const double* mrow = mg.row(i);
    const double* prow = h_prev.row(i);
    double acc_u = 0.0, acc_b = 0.0;
    for (int j = 0; j < b; ++j) {
      acc_u = std::fma(mrow[j], prow[j], acc_u);
      acc_b += mrow[j];
    }
    g.g_u[i] += acc_u;
    g.g_b_long[i] += acc_b;
  }

  if (variant_has_short(variant)) {
    Mat gated = sc.s;
    for (size_t i = 0; i < gated.data.size(); ++i) gated.data[i] *= sc.h_short.data[i];
    transpose_into(scratch_t, gated);
    gemm_acc(g.g_w_s, mg, scratch_t);
    if (variant_has_selection(variant)) {
      const Mat base = gemm_tn(p.w_s, mg);
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
      transpose_into(scratch_t, h_prev);
      gemm_acc(g.g_w_ls, kernel, scratch_t);
      for (int i = 0; i < n; ++i) {
        const double* krow = kernel.row(i);
        double acc = 0.0;
        for (int j = 0; j < b; ++j) acc += krow[j];
        g.g_b_s[i] += acc;
      }
    }
  } else {
    // long-only variant: the input feeds the long sublayer
    transpose_into(scratch_t, xs[k - 1]);
    gemm_acc(g.g_w_in, mg, scratch_t);
    if (want_input_grads) acc_into(g.g_x[k - 1], gemm_tn(p.w_in, mg));
  }
}

// one triple-sum (or pure-short double-sum) term landing at short step k;
// mg = relu'_{f,k} o (chained grad)
void add_short_term(LayerGrads& g, Variant variant, const LayerParams& p, const LayerCache& cache,
                    const std::vector<Mat>& xs, int k, const Mat& mg, bool want_input_grads,
                    Mat& scratch_t) {
  const int n = cache.neurons, b = cache.batch;
  const Mat& hs_prev = cache.h_short_at(k - 1);
  if (variant == Variant::ind_plus_selection) {
    for (int i = 0; i < n; ++i) {
      const double* mrow = mg.row(i);
      const double* prow = hs_prev.row(i);
      double acc = 0.0;
      for (int j = 0; j < b; ++j) acc = std::fma(mrow[j], prow[j], acc);
      g.g_w_rec.at(i, i) += acc;
    }
  } else {
    transpose_into(scratch_t, hs_prev);
    gemm_acc(g.g_w_rec, mg, scratch_t);
  }
  transpose_into(scratch_t, xs[k - 1]);
  gemm_acc(g.g_w_in, mg, scratch_t);
  for (int i = 0; i < n; ++i) {
    const double* mrow = mg.row(i);
    double acc = 0.0;
    for (int j = 0; j < b; ++j) acc += mrow[j];
    g.g_b_short[i] += acc;
  }
  if (want_input_grads) acc_into(g.g_x[k - 1], gemm_tn(p.w_in, mg));
}

}  // namespace

LayerGrads appendix_grads(Variant variant, const LayerParams& p, const LayerCache& cache,
                          const std::vector<Mat>& xs, const std::vector<Mat>& ext,
                          bool want_input_grads) {
  const int steps = cache.steps, n = cache.neurons, b = cache.batch;
  require(cache.variant == variant, "appendix_grads: cache built for a different variant");
  require(n <= 8, "appendix_grads: neuron cap (8) exceeded");
  require(steps <= 10, "appendix_grads: step cap (10) exceeded");
  require(static_cast<int>(ext.size()) == steps, "appendix_grads: ext length != steps");
  require(static_cast<int>(xs.size()) == steps, "appendix_grads: xs length != steps");

  LayerGrads g = zero_grads(p);
  if (want_input_grads) g.g_x.assign(steps, Mat());

  Mat mg, scratch_t, kernel;
  for (int t = 1; t <= steps; ++t) {
    if (ext[t - 1].empty()) continue;
    const Mat& et = ext[t - 1];
    require(et.rows == n && et.cols == b, "appendix_grads: ext shape mismatch");

    if (variant == Variant::rnn_relu) {
      // loss -> h~_t -> h~_k, landing on the short parameters
      for (int k = t; k >= 1; --k) {
        const Mat ghs = short_chain_adjoint(p, cache, k, t, et);
        masked_copy(mg, cache.step[k - 1].h_short, ghs);
        add_short_term(g, variant, p, cache, xs, k, mg, want_input_grads, scratch_t);
      }
      continue;
    }

    // loss -> h_t -> h_k, landing on the long-sublayer / selection parameters
    for (int k = t; k >= 1; --k) {
      const Mat gh = long_chain_adjoint(p, cache, k, t, et);
      masked_copy(mg, cache.step[k - 1].h_long, gh);
      add_long_term(g, variant, p, cache, xs, k, mg, want_input_grads, scratch_t, kernel);
    }

    // loss -> h_t -> h_m -> h~_m -> h~_k, landing on the short parameters;
    // the whole factor chain is rebuilt per (t, m, k)
    if (variant_has_short(variant)) {
      for (int m = t; m >= 1; --m) {
        for (int k = m; k >= 1; --k) {
          const Mat gh_m = long_chain_adjoint(p, cache, m, t, et);
          masked_copy(mg, cache.step[m - 1].h_long, gh_m);
          const Mat base = gemm_tn(p.w_s, mg);
          Mat seed(n, b);
          const StepCache& sc_m = cache.step[m - 1];
          for (size_t i = 0; i < seed.data.size(); ++i)
            seed.data[i] = std::fma(sc_m.s.data[i], base.data[i], seed.data[i]);
          const Mat ghs = short_chain_adjoint(p, cache, k, m, seed);
          masked_copy(mg, cache.step[k - 1].h_short, ghs);
          add_short_term(g, variant, p, cache, xs, k, mg, want_input_grads, scratch_t);
        }
      }
    }
  }
  return g;
}

NetworkGrads appendix_grads(const Network& net, const std::vector<Mat>& xs,
                            const NetworkCache& cache, const std::vector<Mat>& g_top) {
  const int layers = static_cast<int>(net.layers.size());
  require(layers > 0 && static_cast<int>(cache.layer.size()) == layers,
          "appendix_grads: cache/network layer count mismatch");
  require(static_cast<int>(g_top.size()) == cache.steps,
          "appendix_grads: loss-grad count != steps");

  NetworkGrads out;
  out.layers.resize(layers);
  std::vector<Mat> ext = g_top;
  for (int l = layers - 1; l >= 0; --l) {
    std::vector<Mat> layer_in;
    if (l == 0) {
      layer_in = xs;
    } else {
      layer_in.reserve(cache.steps);
      for (int t = 1; t <= cache.steps; ++t) layer_in.push_back(cache.layer[l - 1].output_at(t));
    }
    out.layers[l] =
        appendix_grads(net.specs[l].variant, net.layers[l], cache.layer[l], layer_in, ext, l > 0);
    if (l > 0) ext = out.layers[l].g_x;
  }
  return out;
}

// ===== frozen-loss finite differences =====

namespace {

// same arithmetic order as the live forward, so the unperturbed frozen run
// reproduces the base trajectory bitwise
inline void relu_inplace(Mat& m) {
  for (auto& x : m.data) x = x > 0.0 ? x : 0.0;
}

inline void add_col_broadcast(Mat& m, const Vec& v) {
  for (int i = 0; i < m.rows; ++i) {
    double* row = m.row(i);
    const double vi = v[i];
    for (int j = 0; j < m.cols; ++j) row[j] += vi;
  }
}

inline void add_rowscaled(Mat& m, const Vec& d, const Mat& x) {
  for (int i = 0; i < m.rows; ++i) {
    double* row = m.row(i);
    const double* xrow = x.row(i);
    const double di = d[i];
    for (int j = 0; j < m.cols; ++j) row[j] = std::fma(di, xrow[j], row[j]);
  }
}

}  // namespace

double frozen_loss_regression(const Network& net, const std::vector<Mat>& xs, const Vec& targets,
                              const NetworkCache& base, int recompute_selection_layer) {
  const int layers = static_cast<int>(net.layers.size());
  require(layers > 0 && static_cast<int>(base.layer.size()) == layers,
          "frozen_loss: base cache/network layer count mismatch");
  const int steps = base.steps, batch = base.batch;
  require(static_cast<int>(xs.size()) == steps, "frozen_loss: xs length != steps");
  require(recompute_selection_layer < layers, "frozen_loss: recompute layer out of range");

  std::vector<Mat> input = xs;
  for (int l = 0; l < layers; ++l) {
    const Variant variant = net.specs[l].variant;
    const LayerParams& p = net.layers[l];
    const LayerCache& bc = base.layer[l];
    const int n = p.w_in.rows;
    const bool recompute_s = l == recompute_selection_layer && variant_has_selection(variant);

    Mat h_short(n, batch), h_long(n, batch);
    std::vector<Mat> output(steps);
    for (int t = 1; t <= steps; ++t) {
      const StepCache& bsc = bc.step[t - 1];

      if (variant_has_short(variant)) {
        Mat pre = gemm(p.w_in, input[t - 1]);
        if (variant == Variant::ind_plus_selection) {
          Vec diag(n);
          for (int i = 0; i < n; ++i) diag[i] = p.w_rec.at(i, i);
          add_rowscaled(pre, diag, h_short);
        } else {
          gemm_acc(pre, p.w_rec, h_short);
        }
        add_col_broadcast(pre, p.b_short);
        relu_inplace(pre);
        h_short = std::move(pre);
      }

      Mat s;
      if (variant_has_selection(variant)) {
        if (recompute_s) {
          // perturbed selection parameters, base inputs, pinned min-max bounds
          Mat z = gemm(p.w_ss, bsc.h_short);
          gemm_acc(z, p.w_ls, bc.h_long_at(t - 1));
          add_col_broadcast(z, p.b_s);
          for (int j = 0; j < batch; ++j) {
            const double mn = bsc.mm_min[j], gap = bsc.mm_max[j] - bsc.mm_min[j];
            if (gap < 1e-12) {
              for (int i = 0; i < n; ++i) z.at(i, j) = 0.0;
            } else {
              const double inv = 1.0 / gap;
              for (int i = 0; i < n; ++i) z.at(i, j) = (z.at(i, j) - mn) * inv;
            }
          }
          for (auto& x : z.data) x = std::max(0.0, x - p.b_thre);
          s = std::move(z);
        } else {
          s = bsc.s;
        }
      } else if (variant == Variant::no_selection) {
        s = Mat(n, batch);
        for (auto& x : s.data) x = 1.0;
      }

      if (variant_has_long(variant)) {
        Mat pre(n, batch);
        if (variant == Variant::indrnn) {
          pre = gemm(p.w_in, input[t - 1]);
        } else {
          Mat gated = std::move(s);
          for (size_t i = 0; i < gated.data.size(); ++i) gated.data[i] *= h_short.data[i];
          gemm_into(pre, p.w_s, gated);
        }
        add_rowscaled(pre, p.u, h_long);
        add_col_broadcast(pre, p.b_long);
        relu_inplace(pre);
        h_long = std::move(pre);
      }

      output[t - 1] = variant == Variant::rnn_relu ? h_short : h_long;
    }
    input = std::move(output);
  }
  return readout_regression(net.head, input[steps - 1], targets).loss;
}

namespace {

struct TensorView {
  double* data = nullptr;
  int rows = 0, cols = 0;
  bool selection = false;  // perturbing it must re-enable the direct S_t path
};

TensorView resolve_selector(Network& net, const ParamSelector& sel) {
  auto mat = [](Mat& m, bool s = false) {
    require(!m.empty(), "finite_diff_frozen: tensor not present for this variant");
    return TensorView{m.data.data(), m.rows, m.cols, s};
  };
  auto vec = [](Vec& v, bool s = false) {
    require(!v.empty(), "finite_diff_frozen: tensor not present for this variant");
    return TensorView{v.data(), static_cast<int>(v.size()), 1, s};
  };
  if (sel.name == "w_out") return mat(net.head.w_out);
  if (sel.name == "b_out") return vec(net.head.b_out);
  require(sel.layer >= 0 && sel.layer < static_cast<int>(net.layers.size()),
          "finite_diff_frozen: layer index out of range");
  LayerParams& p = net.layers[sel.layer];
  if (sel.name == "w_in") return mat(p.w_in);
  if (sel.name == "w_rec") return mat(p.w_rec);
  if (sel.name == "b_short") return vec(p.b_short);
  if (sel.name == "w_ss") return mat(p.w_ss, true);
  if (sel.name == "w_ls") return mat(p.w_ls, true);
  if (sel.name == "b_s") return vec(p.b_s, true);
  if (sel.name == "b_thre") {
    require(variant_has_selection(net.specs[sel.layer].variant),
            "finite_diff_frozen: tensor not present for this variant");
    return TensorView{&p.b_thre, 1, 1, true};
  }
  if (sel.name == "w_s") return mat(p.w_s);
  if (sel.name == "u") return vec(p.u);
  if (sel.name == "b_long") return vec(p.b_long);
  throw std::invalid_argument("finite_diff_frozen: unknown tensor name: " + sel.name);
}

}  // namespace

Mat finite_diff_frozen(const Network& net, const std::vector<Mat>& xs, const Vec& targets,
                       const ParamSelector& sel, double step) {
  require(step >= 1e-7 && step <= 1e-3, "finite_diff_frozen: step outside [1e-7, 1e-3]");
  const NetworkCache base = forward_sequence(net, xs);
  Network work = net;
  const TensorView view = resolve_selector(work, sel);
  const int recompute_layer = view.selection ? sel.layer : -1;

  Mat out(view.rows, view.cols);
  const size_t count = static_cast<size_t>(view.rows) * view.cols;
  for (size_t i = 0; i < count; ++i) {
    const double orig = view.data[i];
    view.data[i] = orig + step;
    const double lp = frozen_loss_regression(work, xs, targets, base, recompute_layer);
    view.data[i] = orig - step;
    const double lm = frozen_loss_regression(work, xs, targets, base, recompute_layer);
    view.data[i] = orig;
    out.data[i] = (lp - lm) / (2.0 * step);
  }
  return out;
}

KinkMargins kink_margins(const Network& net, const NetworkCache& cache) {
  require(net.layers.size() == cache.layer.size(), "kink_margins: cache/network layer mismatch");
  KinkMargins m;
  for (size_t l = 0; l < cache.layer.size(); ++l) {
    const LayerCache& lc = cache.layer[l];
    require(lc.record_pre, "kink_margins: trajectory recorded without pre-activations");
    const double b_thre = net.layers[l].b_thre;
    for (const StepCache& sc : lc.step) {
      for (double x : sc.pre_short.data) m.pre = std::min(m.pre, std::fabs(x));
      for (double x : sc.pre_long.data) m.pre = std::min(m.pre, std::fabs(x));
      if (sc.sel_pre.empty()) continue;
      // effective selection pre-activation is mm(z) - b_thre; z is recovered
      // from the recorded raw values and bounds
      for (int j = 0; j < sc.sel_pre.cols; ++j) {
        const double gap = sc.mm_max[j] - sc.mm_min[j];
        m.mm_gap = std::min(m.mm_gap, gap);
        if (gap < 1e-12) continue;  // degeneracy is captured by the gap margin
        const double inv = 1.0 / gap;
        for (int i = 0; i < sc.sel_pre.rows; ++i) {
          const double z = (sc.sel_pre.at(i, j) - sc.mm_min[j]) * inv;
          m.pre = std::min(m.pre, std::fabs(z - b_thre));
        }
      }
    }
  }
  return m;
}

FdInstance sample_kink_guarded(const std::vector<LayerSpec>& specs, int steps, int batch,
                               Rng& rng) {
  require(!specs.empty() && steps >= 1 && batch >= 1, "sample_kink_guarded: bad sizes");
  const int in_dim = specs.front().input_dim;
  for (int attempt = 0; attempt < 100; ++attempt) {
    FdInstance inst;
    inst.net = init_network(specs, 1, 0.0, rng);
    inst.xs.assign(steps, Mat());
    for (auto& x : inst.xs) {
      x = Mat(in_dim, batch);
      for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
    }
    inst.targets.assign(batch, 0.0);
    for (auto& t : inst.targets) t = rng.uniform(0.0, 1.0);
    const NetworkCache cache = forward_sequence(inst.net, inst.xs, /*record_pre=*/true);
    const KinkMargins m = kink_margins(inst.net, cache);
    if (m.pre > 1e-3 && m.mm_gap > 1e-3) return inst;
  }
  throw std::runtime_error(
      "sample_kink_guarded: no instance cleared the kink margins after 100 resamples");
}

// ===== gradient-control bounds =====

OracleReport bound_check(const LayerParams& p, const ConstraintSpec& cons, const LayerCache& cache,
                         int span, double epsilon, double gamma) {
  require(cons.delta < 1.0, "bound_check: delta must be below 1");
  const int t = cache.steps;
  const GradNormReport probe = grad_norm_probe(p, cache, t, span);

  OracleReport rep;
  auto add = [&rep](const std::string& label, double measured, double limit, bool ok) {
    OracleEntry e;
    e.param = label;
    e.measured = measured;
    e.limit = limit;
    e.pass = ok;
    e.max_abs_err = ok ? 0.0 : std::fabs(measured - limit);
    rep.pass = rep.pass && ok;
    rep.entries.push_back(std::move(e));
  };

  // preconditions: the bounds are only guaranteed under the training constraints
  const double sigma = spectral_norm(p.w_rec);
  add("sigma_max(w_rec)", sigma, cons.delta, sigma <= cons.delta + 1e-10);
  double u_violation = 0.0;
  for (double ui : p.u)
    u_violation = std::max({u_violation, cons.u_low - ui, ui - cons.u_high});
  add("u_interval", u_violation, 0.0, u_violation <= 0.0);

  double long_worst = 0.0;
  for (double x : probe.long_norms) long_worst = std::max(long_worst, x);
  add("long_path_upper", long_worst, gamma, long_worst <= gamma);

  double mixed_worst = 0.0;
  for (double x : probe.mixed_norms) mixed_worst = std::max(mixed_worst, x);
  const double mixed_limit = probe.s_max * gamma / (1.0 - cons.delta);
  add("mixed_path_upper", mixed_worst, mixed_limit, mixed_worst <= mixed_limit);

  // floor along windows where some neuron stays active throughout
  if (cons.u_low > 0.0) {
    const int n = cache.neurons;
    std::vector<char> active(n, 1);
    double floor_worst = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= span; ++k) {
      const Mat& h = cache.step[t - k].h_long;
      bool any = false;
      for (int i = 0; i < n; ++i) {
        if (active[i] && h.at(i, 0) <= 0.0) active[i] = 0;
        any = any || active[i];
      }
      if (any) floor_worst = std::min(floor_worst, probe.long_norms[k - 1]);
    }
    if (std::isfinite(floor_worst))
      add("long_path_lower", floor_worst, epsilon, floor_worst >= epsilon - 1e-10);
  }
  return rep;
}

}  // namespace durnn
