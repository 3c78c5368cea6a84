#include "durnn/cell.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace durnn {

// ===== variants =====

Variant variant_from_string(const std::string& s) {
  if (s == "durnn") return Variant::durnn;
  if (s == "no_selection") return Variant::no_selection;
  if (s == "ind_plus_selection") return Variant::ind_plus_selection;
  if (s == "rnn_relu") return Variant::rnn_relu;
  if (s == "indrnn") return Variant::indrnn;
  throw std::invalid_argument("unknown variant: " + s);
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::durnn: return "durnn";
    case Variant::no_selection: return "no_selection";
    case Variant::ind_plus_selection: return "ind_plus_selection";
    case Variant::rnn_relu: return "rnn_relu";
    case Variant::indrnn: return "indrnn";
  }
  throw std::invalid_argument("unknown variant value");
}

bool variant_has_short(Variant v) { return v != Variant::indrnn; }
bool variant_has_long(Variant v) { return v != Variant::rnn_relu; }
bool variant_has_selection(Variant v) {
  return v == Variant::durnn || v == Variant::ind_plus_selection;
}

ConstraintSpec make_constraints(double epsilon, double gamma, int seq_len, bool final_layer) {
  if (seq_len < 1) throw std::invalid_argument("make_constraints: seq_len must be positive");
  ConstraintSpec c;
  c.delta = std::pow(0.5, 1.0 / seq_len);
  c.u_low = final_layer ? std::pow(epsilon, 1.0 / seq_len) : 0.0;
  c.u_high = std::pow(gamma, 1.0 / seq_len);
  return c;
}

// ===== init =====

static Mat uniform_mat(int r, int c, double bound, Rng& rng) {
  Mat m(r, c);
  for (auto& x : m.data) x = rng.uniform(-bound, bound);
  return m;
}

LayerParams init_layer(const LayerSpec& spec, Rng& rng) {
  const int n = spec.neurons, m = spec.input_dim;
  if (n <= 0 || m <= 0) throw std::invalid_argument("init_layer: dimensions must be positive");
  const double in_bound = std::sqrt(1.0 / m);
  const double rec_bound = std::sqrt(1.0 / n);
  const ConstraintSpec& cs = spec.constraints;
  const double u_init_lo = std::max(cs.u_low, 0.9);
  const double u_init_hi = std::min(cs.u_high, 1.0);

  LayerParams p;
  p.w_in = uniform_mat(n, m, in_bound, rng);
  if (variant_has_short(spec.variant)) {
    if (spec.variant == Variant::ind_plus_selection) {
      // independent short recurrence: diagonal storage, U-style interval
      p.w_rec = Mat(n, n);
      for (int i = 0; i < n; ++i) p.w_rec.at(i, i) = rng.uniform(u_init_lo, u_init_hi);
    } else {
      p.w_rec = clip_singular_values(uniform_mat(n, n, rec_bound, rng), cs.delta);
    }
    p.b_short.assign(n, 0.0);
  }
  if (variant_has_selection(spec.variant)) {
    p.w_ss = uniform_mat(n, n, rec_bound, rng);
    p.w_ls = uniform_mat(n, n, rec_bound, rng);
    p.b_s.assign(n, 0.0);
    p.b_thre = 0.1;
  }
  if (variant_has_long(spec.variant)) {
    if (variant_has_short(spec.variant)) p.w_s = uniform_mat(n, n, rec_bound, rng);
    p.u.assign(n, 0.0);
    for (int i = 0; i < n; ++i) p.u[i] = rng.uniform(u_init_lo, u_init_hi);
    p.b_long.assign(n, 0.0);
  }
  return p;
}

ReadoutParams init_readout(int out_dim, int neurons, double bias_init, Rng& rng) {
  ReadoutParams h;
  h.w_out = uniform_mat(out_dim, neurons, std::sqrt(1.0 / neurons), rng);
  h.b_out.assign(out_dim, bias_init);
  return h;
}

Network init_network(const std::vector<LayerSpec>& specs, int out_dim, double readout_bias_init,
                     Rng& rng) {
  Network net;
  net.specs = specs;
  for (const auto& s : specs) net.layers.push_back(init_layer(s, rng));
  net.head = init_readout(out_dim, specs.back().neurons, readout_bias_init, rng);
  return net;
}

// ===== normalization and selection =====

void min_max_normalize_cols(Mat& z, Vec& mm_min, Vec& mm_max) {
  const int n = z.rows, b = z.cols;
  mm_min.assign(b, 0.0);
  mm_max.assign(b, 0.0);
  for (int j = 0; j < b; ++j) {
    double mn = z.at(0, j), mx = z.at(0, j);
    for (int i = 1; i < n; ++i) {
      const double x = z.at(i, j);
      if (x < mn) mn = x;
      if (x > mx) mx = x;
    }
    mm_min[j] = mn;
    mm_max[j] = mx;
    const double gap = mx - mn;
    if (gap < 1e-12) {
      for (int i = 0; i < n; ++i) z.at(i, j) = 0.0;
    } else {
      const double inv = 1.0 / gap;
      for (int i = 0; i < n; ++i) z.at(i, j) = (z.at(i, j) - mn) * inv;
    }
  }
}

Vec min_max_normalize(const Vec& v, double& mn, double& mx) {
  if (v.empty()) throw std::invalid_argument("min_max_normalize: empty vector");
  Mat z(static_cast<int>(v.size()), 1);
  for (size_t i = 0; i < v.size(); ++i) z.at(static_cast<int>(i), 0) = v[i];
  Vec mns, mxs;
  min_max_normalize_cols(z, mns, mxs);
  mn = mns[0];
  mx = mxs[0];
  Vec out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = z.at(static_cast<int>(i), 0);
  return out;
}

Vec selection_weights(const LayerParams& p, const Vec& h_short, const Vec& h_long_prev,
                      double& mm_min, double& mm_max, Vec* sel_pre) {
  Vec z = matvec(p.w_ss, h_short);
  Vec zl = matvec(p.w_ls, h_long_prev);
  for (size_t i = 0; i < z.size(); ++i) z[i] += zl[i] + p.b_s[i];
  if (sel_pre) *sel_pre = z;
  Vec s = min_max_normalize(z, mm_min, mm_max);
  for (auto& x : s) x = std::max(0.0, x - p.b_thre);
  return s;
}

// ===== batched forward =====

namespace {

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

// m += diag(d) * x, i.e. row i scaled by d[i]
inline void add_rowscaled(Mat& m, const Vec& d, const Mat& x) {
  for (int i = 0; i < m.rows; ++i) {
    double* row = m.row(i);
    const double* xrow = x.row(i);
    const double di = d[i];
    for (int j = 0; j < m.cols; ++j) row[j] = std::fma(di, xrow[j], row[j]);
  }
}

inline void check_finite(const Mat& m, int t, const char* what) {
  double acc = 0.0;
  for (double x : m.data) acc += x;
  if (!std::isfinite(acc))
    throw std::runtime_error(std::string("non-finite ") + what + " at time step " +
                             std::to_string(t));
}

}  // namespace

void forward_step_batch(Variant variant, const LayerParams& p, const Mat& x_t,
                        const Mat& h_short_prev, const Mat& h_long_prev, int t,
                        StepCache& out, bool record_pre) {
  const int b = x_t.cols;
  const int n = p.w_in.rows;
  if (p.w_in.cols != x_t.rows) throw std::invalid_argument("forward_step: input width mismatch");

  // --- short sublayer ---
  if (variant_has_short(variant)) {
    if (h_short_prev.rows != n || h_short_prev.cols != b)
      throw std::invalid_argument("forward_step: short state shape mismatch");
    Mat pre = gemm(p.w_in, x_t);
    if (variant == Variant::ind_plus_selection) {
      Vec diag(n);
      for (int i = 0; i < n; ++i) diag[i] = p.w_rec.at(i, i);
      add_rowscaled(pre, diag, h_short_prev);
    } else {
      gemm_acc(pre, p.w_rec, h_short_prev);
    }
    add_col_broadcast(pre, p.b_short);
    if (record_pre) out.pre_short = pre;
    relu_inplace(pre);
    out.h_short = std::move(pre);
    check_finite(out.h_short, t, "short-sublayer state");
  } else {
    out.h_short = Mat();
  }

  // --- selection ---
  if (variant_has_selection(variant)) {
    Mat z = gemm(p.w_ss, out.h_short);
    gemm_acc(z, p.w_ls, h_long_prev);
    add_col_broadcast(z, p.b_s);
    if (record_pre) out.sel_pre = z;
    min_max_normalize_cols(z, out.mm_min, out.mm_max);
    for (auto& x : z.data) x = std::max(0.0, x - p.b_thre);
    out.s = std::move(z);
  } else if (variant == Variant::no_selection) {
    out.s = Mat(n, b);
    for (auto& x : out.s.data) x = 1.0;
    out.mm_min.assign(b, 0.0);
    out.mm_max.assign(b, 0.0);  // degenerate marker; selection grads unused
  } else {
    out.s = Mat();
    out.mm_min.clear();
    out.mm_max.clear();
  }

  // --- long sublayer ---
  if (variant_has_long(variant)) {
    if (h_long_prev.rows != n || h_long_prev.cols != b)
      throw std::invalid_argument("forward_step: long state shape mismatch");
    Mat pre(n, b);
    if (variant == Variant::indrnn) {
      pre = gemm(p.w_in, x_t);
    } else {
      // i_t = S_t o h~_t
      Mat gated = out.s;
      for (size_t i = 0; i < gated.data.size(); ++i) gated.data[i] *= out.h_short.data[i];
      gemm_into(pre, p.w_s, gated);
    }
    add_rowscaled(pre, p.u, h_long_prev);
    add_col_broadcast(pre, p.b_long);
    if (record_pre) out.pre_long = pre;
    relu_inplace(pre);
    out.h_long = std::move(pre);
    check_finite(out.h_long, t, "long-sublayer state");
  } else {
    out.h_long = Mat();
  }
}

StepResult forward_step(const LayerParams& p, const Vec& x_t, const Vec& h_short_prev,
                        const Vec& h_long_prev, Variant variant) {
  const int n = static_cast<int>(variant_has_short(variant) ? h_short_prev.size()
                                                            : h_long_prev.size());
  Mat x(static_cast<int>(x_t.size()), 1);
  for (size_t i = 0; i < x_t.size(); ++i) x.at(static_cast<int>(i), 0) = x_t[i];
  auto col = [&](const Vec& v) {
    Mat m(n, 1);
    if (!v.empty())
      for (int i = 0; i < n; ++i) m.at(i, 0) = v[i];
    return m;
  };
  StepResult r;
  forward_step_batch(variant, p, x, col(h_short_prev), col(h_long_prev), 1, r.cache, true);
  auto tovec = [](const Mat& m) {
    Vec v(m.rows);
    for (int i = 0; i < m.rows; ++i) v[i] = m.at(i, 0);
    return v;
  };
  if (!r.cache.h_short.empty()) r.h_short = tovec(r.cache.h_short);
  if (!r.cache.h_long.empty()) r.h_long = tovec(r.cache.h_long);
  return r;
}

NetworkCache forward_sequence(const Network& net, const std::vector<Mat>& xs, bool record_pre) {
  if (net.layers.size() != net.specs.size())
    throw std::invalid_argument("forward_sequence: specs/layers size mismatch");
  if (xs.empty()) throw std::invalid_argument("forward_sequence: empty input sequence");
  NetworkCache cache;
  cache.steps = static_cast<int>(xs.size());
  cache.batch = xs[0].cols;
  cache.layer.resize(net.layers.size());

  for (size_t l = 0; l < net.layers.size(); ++l) {
    const LayerSpec& spec = net.specs[l];
    LayerCache& lc = cache.layer[l];
    lc.variant = spec.variant;
    lc.neurons = spec.neurons;
    lc.batch = cache.batch;
    lc.steps = cache.steps;
    lc.record_pre = record_pre;
    lc.zero_state = Mat(spec.neurons, cache.batch);
    lc.step.resize(cache.steps);
    const LayerCache* below = l == 0 ? nullptr : &cache.layer[l - 1];
    for (int t = 1; t <= cache.steps; ++t) {
      const Mat& x_t = below ? below->output_at(t) : xs[t - 1];
      if (!below && x_t.cols != cache.batch)
        throw std::invalid_argument("forward_sequence: inconsistent batch width");
      try {
        forward_step_batch(spec.variant, net.layers[l], x_t, lc.h_short_at(t - 1),
                           lc.h_long_at(t - 1), t, lc.step[t - 1], record_pre);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("layer " + std::to_string(l + 1) + ": " + e.what());
      }
    }
  }
  return cache;
}

// ===== readouts =====

RegressionReadout readout_regression(const ReadoutParams& head, const Mat& h_last,
                                     const Vec& targets) {
  const int b = h_last.cols;
  if (static_cast<int>(targets.size()) != b)
    throw std::invalid_argument("readout_regression: target count mismatch");
  if (head.w_out.rows != 1) throw std::invalid_argument("readout_regression: head must have one output");
  RegressionReadout r;
  Mat yhat = gemm(head.w_out, h_last);  // 1 x B
  r.pred.assign(b, 0.0);
  Mat g_y(1, b);
  double loss = 0.0;
  const double inv_b = 1.0 / b;
  for (int j = 0; j < b; ++j) {
    const double y = yhat.at(0, j) + head.b_out[0];
    r.pred[j] = y;
    const double e = y - targets[j];
    loss += e * e;
    g_y.at(0, j) = 2.0 * e * inv_b;
  }
  r.loss = loss * inv_b;
  r.g_h = gemm_tn(head.w_out, g_y);
  Mat h_t = transposed(h_last);
  r.g_w_out = gemm(g_y, h_t);
  r.g_b_out.assign(1, 0.0);
  for (int j = 0; j < b; ++j) r.g_b_out[0] += g_y.at(0, j);
  return r;
}

ClassificationReadout readout_classification(const ReadoutParams& head, const Mat& h_last,
                                             const std::vector<int>& labels) {
  const int b = h_last.cols, k = head.w_out.rows;
  if (static_cast<int>(labels.size()) != b)
    throw std::invalid_argument("readout_classification: label count mismatch");
  ClassificationReadout r;
  Mat z = gemm(head.w_out, h_last);  // K x B
  add_col_broadcast(z, head.b_out);
  Mat g_z(k, b);
  double loss = 0.0;
  const double inv_b = 1.0 / b;
  for (int j = 0; j < b; ++j) {
    const int y = labels[j];
    if (y < 0 || y >= k) throw std::invalid_argument("readout_classification: label out of range");
    double mx = z.at(0, j);
    int argmax = 0;
    for (int i = 1; i < k; ++i)
      if (z.at(i, j) > mx) { mx = z.at(i, j); argmax = i; }
    double denom = 0.0;
    for (int i = 0; i < k; ++i) denom += std::exp(z.at(i, j) - mx);
    const double log_denom = std::log(denom);
    loss += -(z.at(y, j) - mx - log_denom);
    if (argmax == y) ++r.correct;
    for (int i = 0; i < k; ++i) {
      const double p = std::exp(z.at(i, j) - mx) / denom;
      g_z.at(i, j) = (p - (i == y ? 1.0 : 0.0)) * inv_b;
    }
  }
  r.loss = loss * inv_b;
  r.g_h = gemm_tn(head.w_out, g_z);
  Mat h_t = transposed(h_last);
  r.g_w_out = gemm(g_z, h_t);
  r.g_b_out.assign(k, 0.0);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < b; ++j) r.g_b_out[i] += g_z.at(i, j);
  return r;
}

}  // namespace durnn
