// ===== checkpoint.cpp =====

#include "durnn/checkpoint.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace durnn {

namespace {

constexpr const char* kMagic = "durnn checkpoint 1";

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error("checkpoint: " + msg);
}

// Trainable tensors plus any untrained selection bias, so the saved model is
// complete. Loading restores by name, so order only fixes the blob layout.
std::vector<TensorRef> model_tensors(Network& net) {
  std::vector<TensorRef> refs = collect_params(net);
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const LayerSpec& spec = net.specs[l];
    Vec& b_s = net.layers[l].b_s;
    if (variant_has_selection(spec.variant) && !spec.train_b_s && !b_s.empty())
      refs.push_back({"layer" + std::to_string(l + 1) + ".b_s", b_s.data(), b_s.size(),
                      static_cast<int>(b_s.size()), 1});
  }
  return refs;
}

void put_f64_le(std::string& out, const double* src, size_t count) {
  for (size_t i = 0; i < count; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &src[i], sizeof bits);
    char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((bits >> (8 * k)) & 0xff);
    out.append(b, 8);
  }
}

void get_f64_le(const char* src, double* dst, size_t count) {
  for (size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(src[i * 8 + k]))
              << (8 * k);
    std::memcpy(&dst[i], &bits, sizeof bits);
  }
}

std::string hash_hex(unsigned long long h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", h);
  return buf;
}

// Line cursor over the text section of the file image.
struct Lines {
  const std::string& text;
  size_t pos = 0;
  int line_no = 0;

  std::string next(const char* what) {
    if (pos >= text.size()) fail(std::string("truncated file, expected ") + what);
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) fail(std::string("missing newline before ") + what);
    std::string out = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    return out;
  }
};

// "key rest-of-line" fields; the value may contain spaces (RNG states).
std::string take_field(Lines& in, const std::string& key) {
  std::string line = in.next(key.c_str());
  if (line.rfind(key + " ", 0) != 0)
    fail("expected '" + key + "' on line " + std::to_string(in.line_no));
  return line.substr(key.size() + 1);
}

long take_long(Lines& in, const std::string& key) {
  const std::string v = take_field(in, key);
  try {
    size_t used = 0;
    long out = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail("invalid integer for " + key + ": '" + v + "'");
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const ExperimentConfig& cfg,
                     const Network& net, const AdamState& adam, long iteration,
                     const Rng& rng_train, const Rng& rng_eval) {
  // Traversal only reads through the refs here.
  Network& mut = const_cast<Network&>(net);
  std::vector<TensorRef> params = collect_params(mut);
  if (adam.m.size() != params.size() || adam.v.size() != params.size())
    fail("optimizer state does not match the parameter list");
  std::vector<TensorRef> refs = model_tensors(mut);
  const std::string cfg_text = serialize_config(cfg);

  std::ostringstream head;
  head << kMagic << '\n';
  head << "config_hash " << hash_hex(config_hash(cfg)) << '\n';
  head << "iteration " << iteration << '\n';
  head << "adam_step " << adam.step_count << '\n';
  head << "rng_train " << rng_train.state() << '\n';
  head << "rng_eval " << rng_eval.state() << '\n';
  head << "config_lines " << std::count(cfg_text.begin(), cfg_text.end(), '\n') << '\n';
  head << cfg_text;

  // Manifest rows carry byte offsets into the blob; Adam slabs follow the
  // model tensors, named after the parameter they track.
  std::string blob;
  std::ostringstream manifest;
  size_t entries = 0;
  auto emit = [&](const std::string& name, int rows, int cols, const double* data,
                  size_t count) {
    manifest << "tensor " << name << ' ' << rows << ' ' << cols << ' ' << blob.size()
             << ' ' << count << '\n';
    put_f64_le(blob, data, count);
    ++entries;
  };
  for (const TensorRef& r : refs) emit(r.name, r.rows, r.cols, r.data, r.count);
  for (size_t k = 0; k < params.size(); ++k) {
    if (adam.m[k].size() != params[k].count || adam.v[k].size() != params[k].count)
      fail("optimizer slab size mismatch at " + params[k].name);
    emit("adam.m." + params[k].name, 1, static_cast<int>(adam.m[k].size()),
         adam.m[k].data(), adam.m[k].size());
    emit("adam.v." + params[k].name, 1, static_cast<int>(adam.v[k].size()),
         adam.v[k].data(), adam.v[k].size());
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot open '" + tmp + "' for writing");
    out << head.str();
    out << "tensors " << entries << '\n';
    out << manifest.str();
    out << "blob " << blob.size() << '\n';
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) fail("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string file = buf.str();

  Lines cur{file};
  if (cur.next("format line") != kMagic) fail("unrecognized format in '" + path + "'");
  const std::string stored_hash = take_field(cur, "config_hash");

  LoadedCheckpoint out;
  out.iteration = take_long(cur, "iteration");
  const long adam_steps = take_long(cur, "adam_step");
  const std::string rng_train_state = take_field(cur, "rng_train");
  const std::string rng_eval_state = take_field(cur, "rng_eval");

  const long cfg_lines = take_long(cur, "config_lines");
  std::string cfg_text;
  for (long i = 0; i < cfg_lines; ++i) cfg_text += cur.next("config line") + '\n';
  out.config = parse_config(cfg_text);
  if (hash_hex(config_hash(out.config)) != stored_hash)
    fail("stored hash does not match the embedded config (file corrupt?)");

  const long n_tensors = take_long(cur, "tensors");
  struct Entry {
    int rows = 0, cols = 0;
    size_t offset = 0, count = 0;
  };
  std::map<std::string, Entry> manifest;
  size_t expect_offset = 0;
  for (long i = 0; i < n_tensors; ++i) {
    std::istringstream row(cur.next("tensor row"));
    std::string tag, name;
    Entry e;
    if (!(row >> tag >> name >> e.rows >> e.cols >> e.offset >> e.count) ||
        tag != "tensor")
      fail("malformed tensor row " + std::to_string(i + 1));
    if (e.offset != expect_offset || e.count == 0)
      fail("bad blob offset for " + name);
    if (!manifest.emplace(name, e).second) fail("duplicate tensor " + name);
    expect_offset += e.count * 8;
  }

  const long blob_bytes = take_long(cur, "blob");
  if (static_cast<size_t>(blob_bytes) != expect_offset)
    fail("blob size disagrees with the manifest");
  if (file.size() - cur.pos != static_cast<size_t>(blob_bytes))
    fail("blob is truncated");
  const char* blob = file.data() + cur.pos;

  Rng init_rng(0);  // every tensor is overwritten below
  out.net = init_network(build_layer_specs(out.config), config_out_dim(out.config),
                         out.config.readout_bias_init, init_rng);

  auto restore = [&](const TensorRef& r, const std::string& name) {
    auto it = manifest.find(name);
    if (it == manifest.end()) fail("missing tensor " + name);
    const Entry& e = it->second;
    if (e.count != r.count || e.rows != r.rows || e.cols != r.cols)
      fail("shape mismatch for " + name);
    get_f64_le(blob + e.offset, r.data, r.count);
    manifest.erase(it);
  };
  for (const TensorRef& r : model_tensors(out.net)) restore(r, r.name);

  std::vector<TensorRef> params = collect_params(out.net);
  out.adam = make_adam(params);
  out.adam.step_count = adam_steps;
  for (size_t k = 0; k < params.size(); ++k) {
    restore({params[k].name, out.adam.m[k].data(), out.adam.m[k].size(), 1,
             static_cast<int>(out.adam.m[k].size())},
            "adam.m." + params[k].name);
    restore({params[k].name, out.adam.v[k].data(), out.adam.v[k].size(), 1,
             static_cast<int>(out.adam.v[k].size())},
            "adam.v." + params[k].name);
  }
  if (!manifest.empty()) fail("unknown tensor " + manifest.begin()->first);

  out.rng_train.set_state(rng_train_state);
  out.rng_eval.set_state(rng_eval_state);
  return out;
}

LoadedCheckpoint load_checkpoint(const std::string& path, const ExperimentConfig& expected) {
  LoadedCheckpoint out = load_checkpoint(path);
  if (resume_hash(out.config) != resume_hash(expected))
    fail("config hash mismatch; resuming must not change the training computation "
         "(architecture, task, batch, schedule, seed)");
  return out;
}

}  // namespace durnn
