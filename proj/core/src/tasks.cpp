#include "durnn/tasks.hpp"

#include <zlib.h>

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace durnn {

// ===== adding problem =====

TaskBatch gen_adding(int seq_len, int batch, Rng& rng) {
  if (seq_len < 2) throw std::invalid_argument("gen_adding: seq_len must be at least 2");
  if (batch < 1) throw std::invalid_argument("gen_adding: batch must be positive");
  TaskBatch tb;
  tb.inputs.assign(seq_len, Mat(2, batch));
  tb.targets.assign(batch, 0.0);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < seq_len; ++t)
      tb.inputs[t].at(0, b) = rng.uniform_open01();
    // two distinct marker positions, uniform without replacement
    const int first = static_cast<int>(rng.bounded_int(static_cast<uint64_t>(seq_len)));
    int second = static_cast<int>(rng.bounded_int(static_cast<uint64_t>(seq_len - 1)));
    if (second >= first) ++second;
    tb.inputs[first].at(1, b) = 1.0;
    tb.inputs[second].at(1, b) = 1.0;
    tb.targets[b] = tb.inputs[first].at(0, b) + tb.inputs[second].at(0, b);
  }
  return tb;
}

// ===== IDX ingestion =====

namespace {

std::vector<unsigned char> read_all(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");  // transparently reads raw files too
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
  if (n < 0) {
    int errnum = 0;
    const char* msg = gzerror(f, &errnum);
    std::string err = msg ? msg : "unknown decompression error";
    gzclose(f);
    throw std::runtime_error(path + ": " + err);
  }
  gzclose(f);
  return out;
}

uint32_t be32(const std::vector<unsigned char>& d, size_t off, const std::string& path) {
  if (off + 4 > d.size())
    throw std::runtime_error(path + ": truncated at offset " + std::to_string(off) +
                             " (need 4 header bytes, have " + std::to_string(d.size() - off) +
                             ")");
  return (uint32_t(d[off]) << 24) | (uint32_t(d[off + 1]) << 16) | (uint32_t(d[off + 2]) << 8) |
         uint32_t(d[off + 3]);
}

}  // namespace

MnistData load_mnist(const std::string& images_path, const std::string& labels_path) {
  const std::vector<unsigned char> img = read_all(images_path);
  const std::vector<unsigned char> lab = read_all(labels_path);

  const uint32_t img_magic = be32(img, 0, images_path);
  if (img_magic != 2051)
    throw std::runtime_error(images_path + ": bad magic " + std::to_string(img_magic) +
                             " at offset 0 (expected 2051)");
  const uint32_t lab_magic = be32(lab, 0, labels_path);
  if (lab_magic != 2049)
    throw std::runtime_error(labels_path + ": bad magic " + std::to_string(lab_magic) +
                             " at offset 0 (expected 2049)");

  MnistData d;
  d.count = static_cast<int>(be32(img, 4, images_path));
  d.rows = static_cast<int>(be32(img, 8, images_path));
  d.cols = static_cast<int>(be32(img, 12, images_path));
  const size_t payload = static_cast<size_t>(d.count) * d.rows * d.cols;
  if (img.size() < 16 + payload)
    throw std::runtime_error(images_path + ": truncated at offset 16 (need " +
                             std::to_string(payload) + " payload bytes, have " +
                             std::to_string(img.size() - 16) + ")");

  const uint32_t lab_count = be32(lab, 4, labels_path);
  if (static_cast<int>(lab_count) != d.count)
    throw std::runtime_error("image/label count mismatch: " + std::to_string(d.count) +
                             " images in " + images_path + " vs " + std::to_string(lab_count) +
                             " labels in " + labels_path);
  if (lab.size() < 8 + static_cast<size_t>(lab_count))
    throw std::runtime_error(labels_path + ": truncated at offset 8 (need " +
                             std::to_string(lab_count) + " payload bytes, have " +
                             std::to_string(lab.size() - 8) + ")");

  d.pixels.assign(img.begin() + 16, img.begin() + 16 + static_cast<long>(payload));
  d.labels.assign(lab.begin() + 8, lab.begin() + 8 + static_cast<long>(lab_count));
  return d;
}

// ===== permutation =====

PixelPermutation make_permutation(int size, unsigned long long seed) {
  if (size < 1) throw std::invalid_argument("make_permutation: size must be positive");
  PixelPermutation p;
  p.seed = seed;
  p.perm.resize(size);
  std::iota(p.perm.begin(), p.perm.end(), 0);
  Rng rng(seed);
  for (int i = size - 1; i >= 1; --i) {
    const int j = static_cast<int>(rng.bounded_int(static_cast<uint64_t>(i) + 1));
    std::swap(p.perm[i], p.perm[j]);
  }
  return p;
}

PixelPermutation inverse_permutation(const PixelPermutation& p) {
  PixelPermutation inv;
  inv.seed = p.seed;
  inv.perm.assign(p.perm.size(), -1);
  for (size_t t = 0; t < p.perm.size(); ++t) {
    const int dst = p.perm[t];
    if (dst < 0 || dst >= static_cast<int>(p.perm.size()) || inv.perm[dst] != -1)
      throw std::invalid_argument("inverse_permutation: input is not a bijection");
    inv.perm[dst] = static_cast<int>(t);
  }
  return inv;
}

namespace {

void validate_permutation(const PixelPermutation& p, int size) {
  if (static_cast<int>(p.perm.size()) != size)
    throw std::invalid_argument("apply_permutation: permutation size " +
                                std::to_string(p.perm.size()) + " != sequence length " +
                                std::to_string(size));
  std::vector<int> sorted = p.perm;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < size; ++i)
    if (sorted[i] != i)
      throw std::invalid_argument("apply_permutation: not a bijection on {0.." +
                                  std::to_string(size - 1) + "}");
}

}  // namespace

MnistData apply_permutation(const MnistData& d, const PixelPermutation& p) {
  const int seq = d.rows * d.cols;
  validate_permutation(p, seq);
  MnistData out;
  out.count = d.count;
  out.rows = d.rows;
  out.cols = d.cols;
  out.labels = d.labels;
  out.pixels.resize(d.pixels.size());
  for (int i = 0; i < d.count; ++i) {
    const unsigned char* src = d.pixels.data() + static_cast<size_t>(i) * seq;
    unsigned char* dst = out.pixels.data() + static_cast<size_t>(i) * seq;
    for (int t = 0; t < seq; ++t) dst[t] = src[p.perm[t]];
  }
  return out;
}

// ===== batch assembly =====

TaskBatch mnist_batch(const MnistData& d, const std::vector<int>& indices) {
  const int seq = d.rows * d.cols;
  const int batch = static_cast<int>(indices.size());
  if (batch < 1) throw std::invalid_argument("mnist_batch: empty index list");
  TaskBatch tb;
  tb.inputs.assign(seq, Mat(1, batch));
  tb.labels.resize(batch);
  for (int b = 0; b < batch; ++b) {
    const int idx = indices[b];
    if (idx < 0 || idx >= d.count)
      throw std::invalid_argument("mnist_batch: index " + std::to_string(idx) +
                                  " out of range (count " + std::to_string(d.count) + ")");
    const unsigned char* src = d.pixels.data() + static_cast<size_t>(idx) * seq;
    for (int t = 0; t < seq; ++t) tb.inputs[t].at(0, b) = src[t] * (1.0 / 255.0);
    tb.labels[b] = d.labels[idx];
  }
  return tb;
}

}  // namespace durnn
