#pragma once

// Minimal dense linear algebra for the recurrent cell: row-major 64-bit
// matrices, deterministic products, one-sided Jacobi SVD, singular-value
// clipping, and a seeded cross-platform RNG.
//
// Determinism contract: every product accumulates its contraction index in
// strictly ascending order per output element, via explicit fma. This makes
// results independent of batch width (a column computed inside an N x B
// product is bitwise equal to the same column computed alone) and stable
// across runs of the same build.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace durnn {

using Vec = std::vector<double>;

struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }
  double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }
  bool empty() const { return data.empty(); }
  size_t size() const { return data.size(); }

  static Mat identity(int n);

  friend bool operator==(const Mat& a, const Mat& b) = default;
};

// ===== products =====
// All throw std::invalid_argument on dimension mismatch.

Mat gemm(const Mat& a, const Mat& b);              // a * b
void gemm_into(Mat& c, const Mat& a, const Mat& b);       // c = a * b (c pre-sized)
void gemm_acc(Mat& c, const Mat& a, const Mat& b);        // c += a * b
Mat gemm_tn(const Mat& a, const Mat& b);           // a^T * b
void gemm_tn_into(Mat& c, const Mat& a, const Mat& b);    // c = a^T * b
void transpose_into(Mat& dst, const Mat& src);
Mat transposed(const Mat& src);

Vec matvec(const Mat& a, const Vec& x);    // a * x
Vec matvec_t(const Mat& a, const Vec& x);  // a^T * x

// ===== SVD and singular-value clipping =====

struct SvdResult {
  Mat u;      // n x n orthogonal
  Vec sigma;  // descending, non-negative
  Mat v;      // n x n orthogonal
};

// One-sided Jacobi on a square matrix (n <= 4096). Deterministic sweep order;
// cap 100 sweeps, relative off-diagonal threshold 1e-12. Throws
// std::runtime_error with the residual if the cap is hit before convergence.
SvdResult svd_small(const Mat& a);

// U * diag(min(sigma_i, delta)) * V^T. Every singular value is clipped, not
// just the largest. If sigma_max(a) <= delta the input is returned unmodified.
Mat clip_singular_values(const Mat& a, double delta);

double spectral_norm(const Mat& a);  // sigma_max via svd_small

// ===== seeded RNG =====
// mt19937_64 raw stream (bit-identical across platforms by the C++ standard)
// with explicit transforms, because std::uniform_real_distribution and
// std::normal_distribution are implementation-defined.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1), 53-bit resolution
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // strictly (0, 1): midpoints of 2^52 equal cells
  double uniform_open01() {
    return (static_cast<double>(gen_() >> 12) + 0.5) * 0x1.0p-52;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Marsaglia polar method; uses std::log/sqrt (deterministic per platform+libm)
  double gaussian();

  // unbiased integer in [0, n) via masked rejection
  int bounded_int(int n);

  // textual serialization (std-defined mt19937_64 stream format + spare state)
  std::string state() const;
  void set_state(const std::string& s);

  friend bool operator==(const Rng& a, const Rng& b) {
    return a.gen_ == b.gen_ && a.has_spare_ == b.has_spare_ && a.spare_ == b.spare_;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace durnn
