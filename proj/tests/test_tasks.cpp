#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "durnn/tasks.hpp"

using namespace durnn;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("/tmp/durnn_task_test_") + name;
}

void write_raw(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
}

void write_gz(const std::string& path, const std::vector<unsigned char>& bytes) {
  gzFile f = gzopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(f);
}

void push_be32(std::vector<unsigned char>& v, uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

// 3 images of 2x2 with recognizable pixel values, labels 7, 0, 9
std::vector<unsigned char> tiny_images() {
  std::vector<unsigned char> v;
  push_be32(v, 2051);
  push_be32(v, 3);
  push_be32(v, 2);
  push_be32(v, 2);
  for (int i = 0; i < 12; ++i) v.push_back(static_cast<unsigned char>(10 * i + 5));
  return v;
}

std::vector<unsigned char> tiny_labels() {
  std::vector<unsigned char> v;
  push_be32(v, 2049);
  push_be32(v, 3);
  v.push_back(7);
  v.push_back(0);
  v.push_back(9);
  return v;
}

}  // namespace

// ===== adding problem =====

TEST_CASE("gen_adding: seq_len below 2 is a fatal input error") {
  Rng rng(1);
  CHECK_THROWS_AS((void)gen_adding(1, 4, rng), std::invalid_argument);
}

TEST_CASE("gen_adding: invariants over a million sequences") {
  Rng rng(2);
  const int L = 10, B = 100, reps = 10000;  // 1e6 sequences
  for (int rep = 0; rep < reps; ++rep) {
    TaskBatch tb = gen_adding(L, B, rng);
    for (int b = 0; b < B; ++b) {
      int markers = 0;
      double marked_sum = 0.0;
      for (int t = 0; t < L; ++t) {
        const double v = tb.inputs[t].at(0, b);
        const double m = tb.inputs[t].at(1, b);
        if (!(v > 0.0 && v < 1.0)) FAIL_CHECK("value outside (0,1): " << v);
        if (m != 0.0 && m != 1.0) FAIL_CHECK("marker not 0/1: " << m);
        if (m == 1.0) {
          ++markers;
          marked_sum += v;
        }
      }
      if (markers != 2) FAIL_CHECK("marker count " << markers);
      if (marked_sum != tb.targets[b]) FAIL_CHECK("target mismatch");
      if (!(tb.targets[b] > 0.0 && tb.targets[b] < 2.0)) FAIL_CHECK("target range");
    }
  }
  CHECK(true);  // reached without FAIL_CHECK firing
}

TEST_CASE("gen_adding: target mean and variance match the 1/6 law") {
  Rng rng(3);
  const int L = 50, B = 100, reps = 1000;  // 1e5 sequences
  double sum = 0.0, sum_sq = 0.0, mse_vs_one = 0.0;
  long n = 0;
  for (int rep = 0; rep < reps; ++rep) {
    TaskBatch tb = gen_adding(L, B, rng);
    for (double y : tb.targets) {
      sum += y;
      sum_sq += y * y;
      mse_vs_one += (y - 1.0) * (y - 1.0);
      ++n;
    }
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(mean > 0.99);
  CHECK(mean < 1.01);
  CHECK(var > 0.16);
  CHECK(var < 0.175);
  // the paper's untrained-network yardstick: predicting the mean gives ~0.167
  CHECK(mse_vs_one / n > 0.16);
  CHECK(mse_vs_one / n < 0.175);
}

TEST_CASE("gen_adding: fixed seed regenerates the batch bit-identically") {
  Rng a(77), b(77);
  TaskBatch t1 = gen_adding(20, 8, a);
  TaskBatch t2 = gen_adding(20, 8, b);
  for (int t = 0; t < 20; ++t) CHECK(t1.inputs[t] == t2.inputs[t]);
  CHECK(t1.targets == t2.targets);
}

TEST_CASE("gen_adding: marker positions cover the sequence roughly uniformly") {
  Rng rng(4);
  const int L = 5, B = 100, reps = 1000;
  std::vector<long> hist(L, 0);
  for (int rep = 0; rep < reps; ++rep) {
    TaskBatch tb = gen_adding(L, B, rng);
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < L; ++t)
        if (tb.inputs[t].at(1, b) == 1.0) ++hist[t];
  }
  const double expect = 2.0 * reps * B / L;  // two markers per sequence
  for (long h : hist) {
    CHECK(h > expect * 0.95);
    CHECK(h < expect * 1.05);
  }
}

// ===== IDX loading =====

TEST_CASE("load_mnist: raw fabricated IDX round-trips") {
  const std::string ip = temp_path("img_raw"), lp = temp_path("lab_raw");
  write_raw(ip, tiny_images());
  write_raw(lp, tiny_labels());
  MnistData d = load_mnist(ip, lp);
  CHECK(d.count == 3);
  CHECK(d.rows == 2);
  CHECK(d.cols == 2);
  REQUIRE(d.pixels.size() == 12);
  for (int i = 0; i < 12; ++i) CHECK(d.pixels[i] == 10 * i + 5);
  CHECK(d.labels[0] == 7);
  CHECK(d.labels[1] == 0);
  CHECK(d.labels[2] == 9);
  std::remove(ip.c_str());
  std::remove(lp.c_str());
}

TEST_CASE("load_mnist: gzip-compressed files load transparently") {
  const std::string ip = temp_path("img_gz"), lp = temp_path("lab_gz");
  write_gz(ip, tiny_images());
  write_gz(lp, tiny_labels());
  MnistData d = load_mnist(ip, lp);
  CHECK(d.count == 3);
  for (int i = 0; i < 12; ++i) CHECK(d.pixels[i] == 10 * i + 5);
  std::remove(ip.c_str());
  std::remove(lp.c_str());
}

TEST_CASE("load_mnist: bad image magic names the value, offset, and expectation") {
  const std::string ip = temp_path("img_badmagic"), lp = temp_path("lab_ok");
  auto img = tiny_images();
  img[3] = 99;  // corrupt the magic
  write_raw(ip, img);
  write_raw(lp, tiny_labels());
  try {
    (void)load_mnist(ip, lp);
    FAIL("expected ingestion error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2051") != std::string::npos);
    CHECK(msg.find("offset 0") != std::string::npos);
  }
  std::remove(ip.c_str());
  std::remove(lp.c_str());
}

TEST_CASE("load_mnist: truncated payload names the offset") {
  const std::string ip = temp_path("img_trunc"), lp = temp_path("lab_ok2");
  auto img = tiny_images();
  img.resize(img.size() - 5);
  write_raw(ip, img);
  write_raw(lp, tiny_labels());
  try {
    (void)load_mnist(ip, lp);
    FAIL("expected ingestion error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("offset 16") != std::string::npos);
  }
  std::remove(ip.c_str());
  std::remove(lp.c_str());
}

TEST_CASE("load_mnist: image/label count mismatch is rejected") {
  const std::string ip = temp_path("img_cnt"), lp = temp_path("lab_cnt");
  write_raw(ip, tiny_images());
  std::vector<unsigned char> lab;
  push_be32(lab, 2049);
  push_be32(lab, 2);
  lab.push_back(1);
  lab.push_back(2);
  write_raw(lp, lab);
  try {
    (void)load_mnist(ip, lp);
    FAIL("expected ingestion error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
  }
  std::remove(ip.c_str());
  std::remove(lp.c_str());
}

// ===== permutation =====

TEST_CASE("make_permutation: bijection, seeded reproducibility, seed sensitivity") {
  PixelPermutation p1 = make_permutation(784, 42);
  PixelPermutation p2 = make_permutation(784, 42);
  PixelPermutation p3 = make_permutation(784, 43);
  CHECK(p1.perm == p2.perm);
  CHECK(p1.perm != p3.perm);
  std::vector<int> sorted = p1.perm;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 784; ++i) REQUIRE(sorted[i] == i);
}

TEST_CASE("apply_permutation: identity leaves the dataset unchanged") {
  const std::string ip = temp_path("img_id"), lp = temp_path("lab_id");
  write_raw(ip, tiny_images());
  write_raw(lp, tiny_labels());
  MnistData d = load_mnist(ip, lp);
  PixelPermutation identity;
  identity.perm = {0, 1, 2, 3};
  MnistData out = apply_permutation(d, identity);
  CHECK(out.pixels == d.pixels);
  CHECK(out.labels == d.labels);
  std::remove(ip.c_str());
  std::remove(lp.c_str());
}

TEST_CASE("apply_permutation: permutation then inverse restores the original") {
  const std::string ip = temp_path("img_inv"), lp = temp_path("lab_inv");
  write_raw(ip, tiny_images());
  write_raw(lp, tiny_labels());
  MnistData d = load_mnist(ip, lp);
  PixelPermutation p = make_permutation(4, 5);
  MnistData fwd = apply_permutation(d, p);
  MnistData back = apply_permutation(fwd, inverse_permutation(p));
  CHECK(back.pixels == d.pixels);
  CHECK(back.labels == d.labels);
  // labels and per-class counts untouched by the forward permutation too
  CHECK(fwd.labels == d.labels);
  std::remove(ip.c_str());
  std::remove(lp.c_str());
}

TEST_CASE("apply_permutation: non-bijections are rejected") {
  const std::string ip = temp_path("img_bad"), lp = temp_path("lab_bad");
  write_raw(ip, tiny_images());
  write_raw(lp, tiny_labels());
  MnistData d = load_mnist(ip, lp);
  PixelPermutation dup;
  dup.perm = {0, 1, 1, 3};
  CHECK_THROWS_AS((void)apply_permutation(d, dup), std::invalid_argument);
  PixelPermutation wrong_size;
  wrong_size.perm = {0, 1, 2};
  CHECK_THROWS_AS((void)apply_permutation(d, wrong_size), std::invalid_argument);
  std::remove(ip.c_str());
  std::remove(lp.c_str());
}

// ===== batch assembly =====

TEST_CASE("mnist_batch: exact 1/255 scaling, labels, and M = 1 shape") {
  const std::string ip = temp_path("img_batch"), lp = temp_path("lab_batch");
  write_raw(ip, tiny_images());
  write_raw(lp, tiny_labels());
  MnistData d = load_mnist(ip, lp);
  TaskBatch tb = mnist_batch(d, {2, 0});
  REQUIRE(tb.inputs.size() == 4);
  CHECK(tb.inputs[0].rows == 1);
  CHECK(tb.inputs[0].cols == 2);
  for (int t = 0; t < 4; ++t) {
    CHECK(tb.inputs[t].at(0, 0) == d.pixels[8 + t] * (1.0 / 255.0));
    CHECK(tb.inputs[t].at(0, 1) == d.pixels[0 + t] * (1.0 / 255.0));
    CHECK(tb.inputs[t].at(0, 0) >= 0.0);
    CHECK(tb.inputs[t].at(0, 0) <= 1.0);
  }
  CHECK(tb.labels[0] == 9);
  CHECK(tb.labels[1] == 7);
  CHECK_THROWS_AS((void)mnist_batch(d, {3}), std::invalid_argument);
  std::remove(ip.c_str());
  std::remove(lp.c_str());
}

TEST_CASE("all-zero fabricated image stays all-zero after scaling") {
  const std::string ip = temp_path("img_zero"), lp = temp_path("lab_zero");
  std::vector<unsigned char> img;
  push_be32(img, 2051);
  push_be32(img, 1);
  push_be32(img, 2);
  push_be32(img, 2);
  for (int i = 0; i < 4; ++i) img.push_back(0);
  std::vector<unsigned char> lab;
  push_be32(lab, 2049);
  push_be32(lab, 1);
  lab.push_back(3);
  write_raw(ip, img);
  write_raw(lp, lab);
  MnistData d = load_mnist(ip, lp);
  TaskBatch tb = mnist_batch(d, {0});
  for (const auto& m : tb.inputs)
    for (double v : m.data) CHECK(v == 0.0);
  std::remove(ip.c_str());
  std::remove(lp.c_str());
}
