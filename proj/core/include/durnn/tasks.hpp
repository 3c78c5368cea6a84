// ===== durnn/tasks.hpp =====
//
// Benchmark data. The adding problem: 2-feature sequences where feature 1
// holds uniform(0,1) values, feature 2 marks exactly two positions with 1,
// and the target is the sum of the two marked values (mean-predictor MSE is
// 1/6). Sequential MNIST: 28x28 images flattened row-major to length-784
// pixel sequences scaled to [0,1], optionally re-indexed by a fixed pixel
// permutation.

#pragma once

#include <string>
#include <vector>

#include "durnn/linalg.hpp"

namespace durnn {

// ===== batches =====

struct TaskBatch {
  std::vector<Mat> inputs;  // per step t-1: M x B
  Vec targets;              // regression targets (adding problem)
  std::vector<int> labels;  // class labels (MNIST)
};

// Feature-1 values from the open interval (0,1); the two marker positions
// drawn uniformly without replacement from {0..L-1}. Draw order per sequence
// (batch columns ascending): L values ascending in t, then the marker pair.
// Throws std::invalid_argument for seq_len < 2.
TaskBatch gen_adding(int seq_len, int batch, Rng& rng);

// ===== MNIST =====

struct MnistData {
  int count = 0, rows = 0, cols = 0;
  std::vector<unsigned char> pixels;  // count * rows * cols, row-major per image
  std::vector<unsigned char> labels;  // count
};

// Reads IDX files (raw or gzip, auto-detected). Big-endian headers: magic
// 2051 + count/rows/cols for images, 2049 + count for labels. Throws
// std::runtime_error naming the file and byte offset on bad magic, truncation,
// or image/label count mismatch.
MnistData load_mnist(const std::string& images_path, const std::string& labels_path);

struct PixelPermutation {
  std::vector<int> perm;  // bijection on {0..size-1}
  unsigned long long seed = 0;
};

// Fisher-Yates shuffle of 0..size-1 seeded independently of training RNG.
PixelPermutation make_permutation(int size, unsigned long long seed);
PixelPermutation inverse_permutation(const PixelPermutation& p);

// Re-indexes every image by the same rule: out[t] = in[perm[t]]. Labels
// untouched. Throws std::invalid_argument if perm is not a bijection of the
// right size.
MnistData apply_permutation(const MnistData& d, const PixelPermutation& p);

// Assembles the M = 1 pixel-sequence batch for the given sample indices,
// scaling to [0,1] by 1/255.
TaskBatch mnist_batch(const MnistData& d, const std::vector<int>& indices);

}  // namespace durnn
