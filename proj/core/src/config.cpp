// ===== config.cpp =====

#include "durnn/config.hpp"

#include <cctype>
#include <cerrno>
#include <climits>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

namespace durnn {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("config: " + msg);
}

[[noreturn]] void fail_line(int line, const std::string& msg) {
  throw std::invalid_argument("config line " + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

long to_long(const std::string& v, int line, const std::string& key) {
  char* end = nullptr;
  errno = 0;
  long out = std::strtol(v.c_str(), &end, 10);
  if (errno != 0 || end == v.c_str() || *end != '\0')
    fail_line(line, "invalid integer '" + v + "' for " + key);
  return out;
}

int to_int(const std::string& v, int line, const std::string& key) {
  long out = to_long(v, line, key);
  if (out < INT_MIN || out > INT_MAX)
    fail_line(line, "integer out of range for " + key);
  return static_cast<int>(out);
}

unsigned long long to_u64(const std::string& v, int line, const std::string& key) {
  char* end = nullptr;
  errno = 0;
  unsigned long long out = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end == v.c_str() || *end != '\0' || v.empty() || v[0] == '-')
    fail_line(line, "invalid unsigned integer '" + v + "' for " + key);
  return out;
}

double to_double(const std::string& v, int line, const std::string& key) {
  char* end = nullptr;
  errno = 0;
  double out = std::strtod(v.c_str(), &end);
  if (errno != 0 || end == v.c_str() || *end != '\0')
    fail_line(line, "invalid number '" + v + "' for " + key);
  return out;
}

bool to_bool(const std::string& v, int line, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail_line(line, "invalid boolean '" + v + "' for " + key + " (use true/false)");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void validate(const ExperimentConfig& c) {
  if (c.task != "adding" && c.task != "mnist" && c.task != "pmnist")
    fail("task must be adding, mnist or pmnist (got '" + c.task + "')");
  if (c.seq_len < 1) fail("seq_len must be positive");
  if (c.batch < 1) fail("batch must be positive");
  if (c.max_iters < 1) fail("max_iters must be positive");
  if (c.eval_interval < 1) fail("eval_interval must be positive");
  if (c.eval_batches < 1) fail("eval_batches must be positive");
  if (!(c.lr > 0.0)) fail("lr must be positive");
  if (!(c.lr_decay > 0.0 && c.lr_decay <= 1.0)) fail("lr_decay must be in (0, 1]");
  if (c.lr_decay_every < 1) fail("lr_decay_every must be positive");
  if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) fail("epsilon must be in (0, 1)");
  if (!(c.gamma > 1.0)) fail("gamma must exceed 1");
  if (!(c.delta >= 0.0 && c.delta < 1.0)) fail("delta must be in [0, 1); 0 derives it");
  if (c.layers.empty()) fail("at least one layer required");
  for (std::size_t i = 0; i < c.layers.size(); ++i)
    if (c.layers[i].neurons < 1)
      fail("layer." + std::to_string(i + 1) + ".neurons must be positive");
  if (c.ckpt_interval < 0) fail("ckpt_interval must be >= 0");
  if (!(c.stop_at_loss >= 0.0)) fail("stop_at_loss must be >= 0");
  if (c.check_constraints_every < 0) fail("check_constraints_every must be >= 0");
  if (c.mnist_train_subset < 1) fail("mnist_train_subset must be positive");
  if (c.threads != 1) fail("threads must be 1 (this build is single-threaded)");
  if (c.test_eval_every < 1) fail("test_eval_every must be positive");
  if (!(c.stop_at_test_err >= 0.0 && c.stop_at_test_err <= 1.0))
    fail("stop_at_test_err must be in [0, 1]");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  bool layers_set = false;
  // layer.K.* lines are staged so they may appear before `layers = N`.
  struct LayerLine {
    int line;
    std::string field, value;
  };
  std::map<int, std::vector<LayerLine>> staged;
  std::set<std::string> seen;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::string line = trim(raw);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail_line(line_no, "expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail_line(line_no, "empty key");
    if (value.empty()) fail_line(line_no, "empty value for " + key);
    if (!seen.insert(key).second) fail_line(line_no, "duplicate key '" + key + "'");

    if (key.rfind("layer.", 0) == 0) {
      std::size_t dot = key.find('.', 6);
      if (dot == std::string::npos) fail_line(line_no, "unknown key '" + key + "'");
      std::string idx_str = key.substr(6, dot - 6);
      int idx = to_int(idx_str, line_no, key);
      if (idx < 1) fail_line(line_no, "layer index must be >= 1 in '" + key + "'");
      staged[idx].push_back({line_no, key.substr(dot + 1), value});
      continue;
    }

    if (key == "task") c.task = value;
    else if (key == "seq_len") c.seq_len = to_int(value, line_no, key);
    else if (key == "batch") c.batch = to_int(value, line_no, key);
    else if (key == "max_iters") c.max_iters = to_long(value, line_no, key);
    else if (key == "eval_interval") c.eval_interval = to_long(value, line_no, key);
    else if (key == "eval_batches") c.eval_batches = to_int(value, line_no, key);
    else if (key == "seed") c.seed = to_u64(value, line_no, key);
    else if (key == "lr") c.lr = to_double(value, line_no, key);
    else if (key == "lr_decay") c.lr_decay = to_double(value, line_no, key);
    else if (key == "lr_decay_every") c.lr_decay_every = to_long(value, line_no, key);
    else if (key == "epsilon") c.epsilon = to_double(value, line_no, key);
    else if (key == "gamma") c.gamma = to_double(value, line_no, key);
    else if (key == "delta") c.delta = to_double(value, line_no, key);
    else if (key == "layers") {
      int n = to_int(value, line_no, key);
      if (n < 1) fail_line(line_no, "layers must be positive");
      c.layers.assign(static_cast<std::size_t>(n), LayerConfig{});
      layers_set = true;
    } else if (key == "train_b_s") c.train_b_s = to_bool(value, line_no, key);
    else if (key == "readout_bias_init") c.readout_bias_init = to_double(value, line_no, key);
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "ckpt_interval") c.ckpt_interval = to_long(value, line_no, key);
    else if (key == "stop_at_loss") c.stop_at_loss = to_double(value, line_no, key);
    else if (key == "check_constraints_every")
      c.check_constraints_every = to_long(value, line_no, key);
    else if (key == "data_dir") c.data_dir = value;
    else if (key == "mnist_train_subset") c.mnist_train_subset = to_int(value, line_no, key);
    else if (key == "permute_seed") c.permute_seed = to_u64(value, line_no, key);
    else if (key == "threads") c.threads = to_int(value, line_no, key);
    else if (key == "test_eval_every") c.test_eval_every = to_long(value, line_no, key);
    else if (key == "stop_at_test_err") c.stop_at_test_err = to_double(value, line_no, key);
    else if (key == "trace_seed") c.trace_seed = to_u64(value, line_no, key);
    else fail_line(line_no, "unknown key '" + key + "'");
  }

  if (!staged.empty() && !layers_set && staged.rbegin()->first > 1)
    fail("layer." + std::to_string(staged.rbegin()->first) +
         ".* given but layers was not set");
  for (const auto& [idx, lines] : staged) {
    if (idx > static_cast<int>(c.layers.size()))
      fail_line(lines.front().line, "layer index " + std::to_string(idx) +
                                        " exceeds layers = " +
                                        std::to_string(c.layers.size()));
    LayerConfig& lc = c.layers[static_cast<std::size_t>(idx) - 1];
    for (const auto& ll : lines) {
      if (ll.field == "neurons") {
        lc.neurons = to_int(ll.value, ll.line, "layer neurons");
      } else if (ll.field == "variant") {
        try {
          lc.variant = variant_from_string(ll.value);
        } catch (const std::exception&) {
          fail_line(ll.line, "unknown variant '" + ll.value + "'");
        }
      } else {
        fail_line(ll.line, "unknown layer field '" + ll.field + "'");
      }
    }
  }

  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "task = " << c.task << '\n';
  out << "seq_len = " << c.seq_len << '\n';
  out << "batch = " << c.batch << '\n';
  out << "max_iters = " << c.max_iters << '\n';
  out << "eval_interval = " << c.eval_interval << '\n';
  out << "eval_batches = " << c.eval_batches << '\n';
  out << "seed = " << c.seed << '\n';
  out << "lr = " << fmt_double(c.lr) << '\n';
  out << "lr_decay = " << fmt_double(c.lr_decay) << '\n';
  out << "lr_decay_every = " << c.lr_decay_every << '\n';
  out << "epsilon = " << fmt_double(c.epsilon) << '\n';
  out << "gamma = " << fmt_double(c.gamma) << '\n';
  out << "delta = " << fmt_double(c.delta) << '\n';
  out << "layers = " << c.layers.size() << '\n';
  for (std::size_t i = 0; i < c.layers.size(); ++i) {
    out << "layer." << (i + 1) << ".neurons = " << c.layers[i].neurons << '\n';
    out << "layer." << (i + 1) << ".variant = " << to_string(c.layers[i].variant) << '\n';
  }
  out << "train_b_s = " << (c.train_b_s ? "true" : "false") << '\n';
  out << "readout_bias_init = " << fmt_double(c.readout_bias_init) << '\n';
  out << "out_dir = " << c.out_dir << '\n';
  out << "ckpt_interval = " << c.ckpt_interval << '\n';
  out << "stop_at_loss = " << fmt_double(c.stop_at_loss) << '\n';
  out << "check_constraints_every = " << c.check_constraints_every << '\n';
  out << "data_dir = " << c.data_dir << '\n';
  out << "mnist_train_subset = " << c.mnist_train_subset << '\n';
  out << "permute_seed = " << c.permute_seed << '\n';
  out << "threads = " << c.threads << '\n';
  out << "test_eval_every = " << c.test_eval_every << '\n';
  out << "stop_at_test_err = " << fmt_double(c.stop_at_test_err) << '\n';
  out << "trace_seed = " << c.trace_seed << '\n';
  return out.str();
}

unsigned long long config_hash(const ExperimentConfig& c) {
  const std::string text = serialize_config(c);
  unsigned long long h = 14695981039346656037ULL;
  for (unsigned char byte : text) {
    h ^= byte;
    h *= 1099511628211ULL;
  }
  return h;
}

unsigned long long resume_hash(const ExperimentConfig& c) {
  ExperimentConfig key = c;
  key.out_dir = "";
  key.max_iters = 1;
  key.ckpt_interval = 0;
  key.stop_at_loss = 0.0;
  key.stop_at_test_err = 0.0;
  key.check_constraints_every = 0;
  key.trace_seed = 0;
  return config_hash(key);
}

int config_input_dim(const ExperimentConfig& c) { return c.task == "adding" ? 2 : 1; }

int config_out_dim(const ExperimentConfig& c) { return c.task == "adding" ? 1 : 10; }

std::vector<LayerSpec> build_layer_specs(const ExperimentConfig& c) {
  std::vector<LayerSpec> specs;
  specs.reserve(c.layers.size());
  for (std::size_t i = 0; i < c.layers.size(); ++i) {
    LayerSpec s;
    s.neurons = c.layers[i].neurons;
    s.input_dim = i == 0 ? config_input_dim(c) : c.layers[i - 1].neurons;
    s.variant = c.layers[i].variant;
    const bool final_layer = i + 1 == c.layers.size();
    s.constraints = make_constraints(c.epsilon, c.gamma, c.seq_len, final_layer);
    if (c.delta > 0.0) s.constraints.delta = c.delta;
    s.train_b_s = c.train_b_s;
    specs.push_back(s);
  }
  return specs;
}

}  // namespace durnn
