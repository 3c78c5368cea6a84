// ===== verify.cpp =====

#include "durnn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "durnn/cell.hpp"
#include "durnn/grad.hpp"
#include "durnn/oracle.hpp"
#include "json.hpp"

namespace durnn {

namespace {

using nlohmann::json;

constexpr Variant kAllVariants[] = {Variant::durnn, Variant::no_selection,
                                    Variant::ind_plus_selection, Variant::rnn_relu,
                                    Variant::indrnn};

struct ParamAgg {
  double worst_rel = 0.0, worst_abs = 0.0;
  bool pass = true;
};

struct CheckResult {
  std::string name;
  bool pass = true;
  int instances = 0;
  double tolerance = 0.0;
  std::map<std::string, ParamAgg> params;
  std::string note;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

void fold(CheckResult& c, const OracleReport& r) {
  for (const OracleEntry& e : r.entries) {
    ParamAgg& a = c.params[e.param];
    a.worst_rel = std::max(a.worst_rel, e.max_rel_err);
    a.worst_abs = std::max(a.worst_abs, e.max_abs_err);
    a.pass = a.pass && e.pass;
    c.pass = c.pass && e.pass;
  }
}

void fold_pair(CheckResult& c, const std::string& pname, const Mat& a, const Mat& b,
               double tol) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw std::invalid_argument("verify: shape mismatch for " + pname);
  double scale = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    scale = std::max({scale, std::fabs(a.data[i]), std::fabs(b.data[i])});
  const double floor = std::max(1e-3 * scale, 1e-30);
  ParamAgg& agg = c.params[pname];
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double diff = std::fabs(a.data[i] - b.data[i]);
    const double rel =
        diff / std::max({std::fabs(a.data[i]), std::fabs(b.data[i]), floor});
    agg.worst_abs = std::max(agg.worst_abs, diff);
    agg.worst_rel = std::max(agg.worst_rel, rel);
  }
  agg.pass = agg.pass && agg.worst_rel <= tol;
  c.pass = c.pass && agg.pass;
}

LayerSpec layer_spec(Variant v, int n, int m, int steps) {
  LayerSpec s;
  s.neurons = n;
  s.input_dim = m;
  s.variant = v;
  s.constraints = make_constraints(0.5, 2.0, steps, true);
  return s;
}

void shake_biases(Network& net, Rng& rng) {
  for (size_t l = 0; l < net.layers.size(); ++l) {
    LayerParams& p = net.layers[l];
    for (double& v : p.b_short) v = rng.uniform(-0.3, 0.3);
    for (double& v : p.b_long) v = rng.uniform(-0.3, 0.3);
    for (double& v : p.b_s) v = rng.uniform(-0.3, 0.3);
    if (variant_has_selection(net.specs[l].variant)) p.b_thre = rng.uniform(0.05, 0.5);
  }
}

Mat random_mat(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  for (double& v : m.data) v = rng.uniform(-1.0, 1.0);
  return m;
}

// Adds 1.0 to the first element of the named gradient tensor; reports whether
// the tensor actually exists in this instance.
bool poison(NetworkGrads& g, const Network& net, const std::string& name) {
  std::string key = name;
  size_t layer = 0;
  if (key.rfind("layer", 0) == 0) {
    const size_t dot = key.find('.');
    if (dot == std::string::npos) return false;
    const long idx = std::strtol(key.c_str() + 5, nullptr, 10);
    if (idx < 1) return false;
    layer = static_cast<size_t>(idx) - 1;
    key = key.substr(dot + 1);
  }
  if (layer >= g.layers.size()) return false;
  LayerGrads& lg = g.layers[layer];
  if (key == "b_thre") {
    if (!variant_has_selection(net.specs[layer].variant)) return false;
    lg.g_b_thre += 1.0;
    return true;
  }
  Mat* mat = key == "w_in"    ? &lg.g_w_in
             : key == "w_rec" ? &lg.g_w_rec
             : key == "w_ss"  ? &lg.g_w_ss
             : key == "w_ls"  ? &lg.g_w_ls
             : key == "w_s"   ? &lg.g_w_s
                              : nullptr;
  if (mat) {
    if (mat->empty()) return false;
    mat->data[0] += 1.0;
    return true;
  }
  Vec* vec = key == "b_short"  ? &lg.g_b_short
             : key == "b_s"    ? &lg.g_b_s
             : key == "u"      ? &lg.g_u
             : key == "b_long" ? &lg.g_b_long
                               : nullptr;
  if (!vec || vec->empty()) return false;
  (*vec)[0] += 1.0;
  return true;
}

CheckResult closed_form_check(const VerifyOptions& opt, Variant v, Rng& rng,
                              long& poisoned) {
  CheckResult c;
  c.name = std::string("closed_form:") + to_string(v);
  c.tolerance = opt.oracle_tol;
  c.instances = opt.instances;
  for (int k = 0; k < opt.instances; ++k) {
    const int n = 2 + rng.bounded_int(opt.neurons - 1);
    const int m = 1 + rng.bounded_int(opt.inputs);
    const int steps = 1 + rng.bounded_int(opt.steps);
    const int batch = 1 + rng.bounded_int(opt.batch);
    Network net = init_network({layer_spec(v, n, m, steps)}, 1, 0.0, rng);
    shake_biases(net, rng);
    std::vector<Mat> xs;
    for (int t = 0; t < steps; ++t) xs.push_back(random_mat(m, batch, rng));
    NetworkCache cache = forward_sequence(net, xs);
    std::vector<Mat> g_top(static_cast<size_t>(steps));
    g_top.back() = random_mat(n, batch, rng);
    for (int t = 0; t + 1 < steps; ++t)
      if (rng.uniform01() < 0.5) g_top[static_cast<size_t>(t)] = random_mat(n, batch, rng);
    NetworkGrads analytic = backward_sequence(net, xs, cache, g_top);
    if (!opt.corrupt.empty() && poison(analytic, net, opt.corrupt)) ++poisoned;
    NetworkGrads reference = appendix_grads(net, xs, cache, g_top);
    fold(c, compare_grads(analytic, reference, opt.oracle_tol));
  }
  return c;
}

Mat vec_as_col(const Vec& v) {
  Mat m(static_cast<int>(v.size()), 1);
  m.data = v;
  return m;
}

Mat scalar_mat(double x) {
  Mat m(1, 1);
  m.at(0, 0) = x;
  return m;
}

CheckResult frozen_fd_check(const VerifyOptions& opt, Rng& rng) {
  CheckResult c;
  c.name = "frozen_fd";
  c.tolerance = opt.fd_tol;
  c.instances = opt.fd_instances;
  const int steps = std::min(opt.steps, 6);
  const int batch = std::min(opt.batch, 2);
  for (int k = 0; k < opt.fd_instances; ++k) {
    FdInstance inst = sample_kink_guarded(
        {layer_spec(Variant::durnn, opt.neurons, opt.inputs, steps)}, steps, batch, rng);
    NetworkCache cache = forward_sequence(inst.net, inst.xs);
    RegressionReadout ro = readout_regression(
        inst.net.head, cache.layer.back().output_at(steps), inst.targets);
    NetworkGrads g = backward_sequence(inst.net, inst.xs, cache,
                                       loss_grads_at_last(steps, std::move(ro.g_h)));
    const LayerGrads& lg = g.layers[0];
    const std::pair<const char*, Mat> tensors[] = {
        {"w_in", lg.g_w_in},        {"w_rec", lg.g_w_rec},
        {"b_short", vec_as_col(lg.g_b_short)}, {"w_ss", lg.g_w_ss},
        {"w_ls", lg.g_w_ls},        {"b_s", vec_as_col(lg.g_b_s)},
        {"b_thre", scalar_mat(lg.g_b_thre)},   {"w_s", lg.g_w_s},
        {"u", vec_as_col(lg.g_u)},  {"b_long", vec_as_col(lg.g_b_long)},
        {"w_out", ro.g_w_out},      {"b_out", vec_as_col(ro.g_b_out)}};
    for (const auto& [name, analytic] : tensors) {
      const Mat fd = finite_diff_frozen(inst.net, inst.xs, inst.targets, {0, name},
                                        opt.fd_step);
      const std::string pname =
          (name == std::string("w_out") || name == std::string("b_out"))
              ? "head." + std::string(name)
              : "layer1." + std::string(name);
      fold_pair(c, pname, analytic, fd, opt.fd_tol);
    }
  }
  return c;
}

CheckResult bounds_check(const VerifyOptions& opt, int span, Rng& rng) {
  CheckResult c;
  c.name = "bounds:L" + std::to_string(span);
  c.instances = opt.bound_inits;
  for (int k = 0; k < opt.bound_inits; ++k) {
    LayerSpec spec = layer_spec(Variant::durnn, std::max(4, opt.neurons), 2, span);
    Network net = init_network({spec}, 1, 0.0, rng);
    std::vector<Mat> xs;
    for (int t = 0; t < span; ++t) xs.push_back(random_mat(2, 1, rng));
    NetworkCache cache = forward_sequence(net, xs);
    fold(c, bound_check(net.layers[0], spec.constraints, cache.layer[0], span, 0.5, 2.0));
  }
  return c;
}

std::string worst_param(const CheckResult& c) {
  std::string name = "-";
  double worst = -1.0;
  for (const auto& [pname, agg] : c.params)
    if (agg.worst_rel > worst) {
      worst = agg.worst_rel;
      name = pname;
    }
  return name;
}

}  // namespace

VerifyOutcome run_verify(const VerifyOptions& opt) {
  if (opt.neurons < 2 || opt.neurons > 8)
    throw std::invalid_argument("verify: neurons must be in [2, 8] (oracle cap)");
  if (opt.steps < 1 || opt.steps > 10)
    throw std::invalid_argument("verify: steps must be in [1, 10] (oracle cap)");
  if (opt.inputs < 1 || opt.batch < 1 || opt.instances < 1)
    throw std::invalid_argument("verify: inputs, batch and instances must be positive");
  for (int span : opt.bound_spans)
    if (span < 2) throw std::invalid_argument("verify: bound spans must be >= 2");

  Rng rng(opt.seed);
  long poisoned = 0;
  std::vector<CheckResult> checks;
  for (Variant v : kAllVariants)
    checks.push_back(closed_form_check(opt, v, rng, poisoned));
  if (opt.fd_instances > 0) checks.push_back(frozen_fd_check(opt, rng));
  for (int span : opt.bound_spans)
    if (opt.bound_inits > 0) checks.push_back(bounds_check(opt, span, rng));
  if (!opt.corrupt.empty() && poisoned == 0) {
    CheckResult c;
    c.name = "fault_injection";
    c.pass = false;
    c.note = "corrupt target '" + opt.corrupt + "' never materialized in any instance";
    checks.push_back(std::move(c));
  }

  VerifyOutcome out;
  std::ostringstream text;
  json root;
  root["seed"] = opt.seed;
  if (!opt.corrupt.empty()) root["corrupt"] = opt.corrupt;
  root["checks"] = json::array();
  for (const CheckResult& c : checks) {
    out.pass = out.pass && c.pass;
    json jc;
    jc["name"] = c.name;
    jc["pass"] = c.pass;
    jc["instances"] = c.instances;
    jc["tolerance"] = c.tolerance;
    if (!c.note.empty()) jc["note"] = c.note;
    jc["params"] = json::array();
    for (const auto& [pname, agg] : c.params) {
      json jp;
      jp["param"] = pname;
      jp["max_rel_err"] = agg.worst_rel;
      jp["max_abs_err"] = agg.worst_abs;
      jp["pass"] = agg.pass;
      jc["params"].push_back(std::move(jp));
    }
    root["checks"].push_back(std::move(jc));

    text << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.instances
         << " instances";
    if (!c.params.empty())
      text << ", worst " << worst_param(c) << " rel "
           << fmt(c.params.at(worst_param(c)).worst_rel) << " (tol "
           << fmt(c.tolerance) << ")";
    if (!c.note.empty()) text << " — " << c.note;
    text << '\n';
    if (!c.pass)
      for (const auto& [pname, agg] : c.params)
        if (!agg.pass)
          text << "       " << pname << ": rel " << fmt(agg.worst_rel) << ", abs "
               << fmt(agg.worst_abs) << '\n';
  }
  root["pass"] = out.pass;
  out.text = text.str();
  out.json = root.dump(2) + "\n";
  return out;
}

}  // namespace durnn
