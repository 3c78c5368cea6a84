#include "durnn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace durnn {

// ===== parameter traversal =====

namespace {

void push(std::vector<TensorRef>& out, const std::string& name, Mat& m) {
  if (!m.empty()) out.push_back({name, m.data.data(), m.data.size(), m.rows, m.cols});
}

void push(std::vector<TensorRef>& out, const std::string& name, Vec& v) {
  if (!v.empty())
    out.push_back({name, v.data(), v.size(), static_cast<int>(v.size()), 1});
}

void push_scalar(std::vector<TensorRef>& out, const std::string& name, double& x) {
  out.push_back({name, &x, 1, 1, 1});
}

}  // namespace

std::vector<TensorRef> collect_params(Network& net) {
  std::vector<TensorRef> refs;
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l + 1) + ".";
    LayerParams& p = net.layers[l];
    const LayerSpec& spec = net.specs[l];
    push(refs, prefix + "w_in", p.w_in);
    push(refs, prefix + "w_rec", p.w_rec);
    push(refs, prefix + "b_short", p.b_short);
    if (variant_has_selection(spec.variant)) {
      push(refs, prefix + "w_ss", p.w_ss);
      push(refs, prefix + "w_ls", p.w_ls);
      if (spec.train_b_s) push(refs, prefix + "b_s", p.b_s);
      push_scalar(refs, prefix + "b_thre", p.b_thre);
    }
    push(refs, prefix + "w_s", p.w_s);
    push(refs, prefix + "u", p.u);
    push(refs, prefix + "b_long", p.b_long);
  }
  push(refs, "head.w_out", net.head.w_out);
  push(refs, "head.b_out", net.head.b_out);
  return refs;
}

std::vector<TensorRef> collect_grads(Network& net, NetworkGrads& grads, Mat& g_w_out,
                                     Vec& g_b_out) {
  if (grads.layers.size() != net.layers.size())
    throw std::invalid_argument("collect_grads: gradient/layer count mismatch");
  std::vector<TensorRef> refs;
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l + 1) + ".";
    LayerGrads& g = grads.layers[l];
    const LayerSpec& spec = net.specs[l];
    push(refs, prefix + "w_in", g.g_w_in);
    push(refs, prefix + "w_rec", g.g_w_rec);
    push(refs, prefix + "b_short", g.g_b_short);
    if (variant_has_selection(spec.variant)) {
      push(refs, prefix + "w_ss", g.g_w_ss);
      push(refs, prefix + "w_ls", g.g_w_ls);
      if (spec.train_b_s) push(refs, prefix + "b_s", g.g_b_s);
      push_scalar(refs, prefix + "b_thre", g.g_b_thre);
    }
    push(refs, prefix + "w_s", g.g_w_s);
    push(refs, prefix + "u", g.g_u);
    push(refs, prefix + "b_long", g.g_b_long);
  }
  push(refs, "head.w_out", g_w_out);
  push(refs, "head.b_out", g_b_out);
  return refs;
}

// ===== Adam =====

AdamState make_adam(const std::vector<TensorRef>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const auto& p : params) {
    st.m.emplace_back(p.count, 0.0);
    st.v.emplace_back(p.count, 0.0);
  }
  return st;
}

void adam_step(AdamState& state, const std::vector<TensorRef>& params,
               const std::vector<TensorRef>& grads, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: tensor list mismatch");
  ++state.step_count;
  const double b1 = state.beta1, b2 = state.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (size_t k = 0; k < params.size(); ++k) {
    if (params[k].count != grads[k].count || params[k].name != grads[k].name)
      throw std::invalid_argument("adam_step: tensor order mismatch at " + params[k].name);
    double* th = params[k].data;
    const double* g = grads[k].data;
    Vec& m = state.m[k];
    Vec& v = state.v[k];
    double sum = 0.0;
    for (size_t i = 0; i < params[k].count; ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / corr1;
      const double v_hat = v[i] / corr2;
      th[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps_hat);
      sum += th[i];
    }
    if (!std::isfinite(sum))
      throw std::runtime_error("adam_step: non-finite update in " + params[k].name);
  }
}

// ===== constraint projection =====

void project_constraints(LayerParams& p, const ConstraintSpec& spec, Variant variant) {
  if (variant_has_short(variant) && !p.w_rec.empty()) {
    if (variant == Variant::ind_plus_selection) {
      for (int i = 0; i < p.w_rec.rows; ++i)
        for (int j = 0; j < p.w_rec.cols; ++j) {
          if (i == j)
            p.w_rec.at(i, i) = std::clamp(p.w_rec.at(i, i), spec.u_low, spec.u_high);
          else
            p.w_rec.at(i, j) = 0.0;
        }
    } else {
      // copy into the existing buffer: TensorRefs held across projection
      // calls must stay valid
      const Mat clipped = clip_singular_values(p.w_rec, spec.delta);
      std::copy(clipped.data.begin(), clipped.data.end(), p.w_rec.data.begin());
    }
  }
  if (variant_has_long(variant))
    for (double& ui : p.u) ui = std::clamp(ui, spec.u_low, spec.u_high);
  if (variant_has_selection(variant))
    p.b_thre = std::clamp(p.b_thre, spec.thre_low, spec.thre_high);
}

void project_constraints(Network& net) {
  for (size_t l = 0; l < net.layers.size(); ++l)
    project_constraints(net.layers[l], net.specs[l].constraints, net.specs[l].variant);
}

double constraint_violation(const Network& net) {
  double worst = 0.0;
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const LayerParams& p = net.layers[l];
    const ConstraintSpec& cs = net.specs[l].constraints;
    const Variant v = net.specs[l].variant;
    if (variant_has_short(v) && !p.w_rec.empty()) {
      if (v == Variant::ind_plus_selection) {
        for (int i = 0; i < p.w_rec.rows; ++i)
          for (int j = 0; j < p.w_rec.cols; ++j) {
            const double x = p.w_rec.at(i, j);
            if (i == j)
              worst = std::max({worst, x - cs.u_high, cs.u_low - x});
            else
              worst = std::max(worst, std::fabs(x));
          }
      } else {
        worst = std::max(worst, spectral_norm(p.w_rec) - cs.delta);
      }
    }
    if (variant_has_long(v))
      for (double ui : p.u) worst = std::max({worst, ui - cs.u_high, cs.u_low - ui});
    if (variant_has_selection(v))
      worst = std::max({worst, p.b_thre - cs.thre_high, cs.thre_low - p.b_thre});
  }
  return std::max(worst, 0.0);
}

// ===== learning-rate schedule =====

double schedule_lr(const LrSchedule& sched, long iteration) {
  if (sched.decay_every <= 0) return sched.initial_lr;
  const long k = iteration / sched.decay_every;
  return sched.initial_lr * std::pow(sched.decay_factor, static_cast<double>(k));
}

double schedule_lr_plateau(LrSchedule& sched, double metric) {
  if (!sched.has_best || metric < sched.best_metric) {
    sched.best_metric = metric;
    sched.has_best = true;
    sched.stale = 0;
  } else if (++sched.stale >= sched.patience) {
    sched.plateau_scale *= sched.decay_factor;
    sched.stale = 0;
  }
  return sched.initial_lr * sched.plateau_scale;
}

}  // namespace durnn
