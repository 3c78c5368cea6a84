#include "durnn/linalg.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace durnn {

Mat Mat::identity(int n) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

// ===== products =====

static void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void gemm_into(Mat& c, const Mat& a, const Mat& b) {
  require(a.cols == b.rows, "gemm: inner dimensions differ");
  require(c.rows == a.rows && c.cols == b.cols, "gemm: output shape mismatch");
  std::memset(c.data.data(), 0, c.size() * sizeof(double));
  gemm_acc(c, a, b);
}

void gemm_acc(Mat& c, const Mat& a, const Mat& b) {
  require(a.cols == b.rows, "gemm: inner dimensions differ");
  require(c.rows == a.rows && c.cols == b.cols, "gemm: output shape mismatch");
  const int n = a.rows, m = a.cols, p = b.cols;
  for (int i = 0; i < n; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (int k = 0; k < m; ++k) {
      const double aik = arow[k];
      const double* brow = b.row(k);
      for (int j = 0; j < p; ++j) crow[j] = std::fma(aik, brow[j], crow[j]);
    }
  }
}

Mat gemm(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  gemm_into(c, a, b);
  return c;
}

void gemm_tn_into(Mat& c, const Mat& a, const Mat& b) {
  require(a.rows == b.rows, "gemm_tn: inner dimensions differ");
  require(c.rows == a.cols && c.cols == b.cols, "gemm_tn: output shape mismatch");
  std::memset(c.data.data(), 0, c.size() * sizeof(double));
  const int m = a.rows, n = a.cols, p = b.cols;
  for (int k = 0; k < m; ++k) {
    const double* arow = a.row(k);
    const double* brow = b.row(k);
    for (int i = 0; i < n; ++i) {
      const double aki = arow[i];
      double* crow = c.row(i);
      for (int j = 0; j < p; ++j) crow[j] = std::fma(aki, brow[j], crow[j]);
    }
  }
}

Mat gemm_tn(const Mat& a, const Mat& b) {
  Mat c(a.cols, b.cols);
  gemm_tn_into(c, a, b);
  return c;
}

void transpose_into(Mat& dst, const Mat& src) {
  dst.rows = src.cols;
  dst.cols = src.rows;
  dst.data.resize(src.size());
  for (int i = 0; i < src.rows; ++i)
    for (int j = 0; j < src.cols; ++j) dst.data[static_cast<size_t>(j) * src.rows + i] = src.at(i, j);
}

Mat transposed(const Mat& src) {
  Mat t;
  transpose_into(t, src);
  return t;
}

Vec matvec(const Mat& a, const Vec& x) {
  require(a.cols == static_cast<int>(x.size()), "matvec: dimension mismatch");
  Vec y(a.rows, 0.0);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double acc = 0.0;
    for (int k = 0; k < a.cols; ++k) acc = std::fma(arow[k], x[k], acc);
    y[i] = acc;
  }
  return y;
}

Vec matvec_t(const Mat& a, const Vec& x) {
  require(a.rows == static_cast<int>(x.size()), "matvec_t: dimension mismatch");
  Vec y(a.cols, 0.0);
  for (int k = 0; k < a.rows; ++k) {
    const double* arow = a.row(k);
    const double xk = x[k];
    for (int i = 0; i < a.cols; ++i) y[i] = std::fma(arow[i], xk, y[i]);
  }
  return y;
}

// ===== one-sided Jacobi SVD =====
// Orthogonalizes the columns of a working copy by plane rotations; singular
// values are the resulting column norms, U the normalized columns, V the
// accumulated rotations.

static constexpr int kMaxSweeps = 100;
static constexpr double kOffTol = 1e-12;
// Deflation: a column whose squared norm falls below kDeflate times the
// squared Frobenius norm (norm below ~1e-15 of the matrix) is numerically
// zero. On rank-deficient inputs such residual columns shrink geometrically
// while staying parallel to live columns, so the relative off-diagonal test
// alone would never converge; deflated columns are excluded from rotations
// and reported with sigma exactly 0.
static constexpr double kDeflate = 1e-30;

SvdResult svd_small(const Mat& a) {
  require(a.rows == a.cols, "svd_small: matrix must be square");
  require(a.rows <= 4096, "svd_small: size cap (4096) exceeded");
  const int n = a.rows;

  // column-major working copies keep the rotation loops contiguous
  std::vector<double> w(static_cast<size_t>(n) * n), v(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) w[static_cast<size_t>(j) * n + i] = a.at(i, j);
  for (int j = 0; j < n; ++j) v[static_cast<size_t>(j) * n + j] = 1.0;

  // squared Frobenius norm, invariant under the rotations
  double fro_sq = 0.0;
  for (double x : w) fro_sq = std::fma(x, x, fro_sq);
  const double deflate = kDeflate * fro_sq;

  double worst = 0.0;
  bool converged = (n <= 1);
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    worst = 0.0;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double* wp = &w[static_cast<size_t>(p) * n];
        double* wq = &w[static_cast<size_t>(q) * n];
        double alpha = 0.0, beta = 0.0, gam = 0.0;
        for (int i = 0; i < n; ++i) {
          alpha = std::fma(wp[i], wp[i], alpha);
          beta = std::fma(wq[i], wq[i], beta);
          gam = std::fma(wp[i], wq[i], gam);
        }
        if (alpha <= deflate || beta <= deflate) continue;
        const double scale = std::sqrt(alpha * beta);
        if (std::abs(gam) <= kOffTol * scale) continue;
        worst = std::max(worst, std::abs(gam) / scale);
        const double zeta = (beta - alpha) / (2.0 * gam);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        double* vp = &v[static_cast<size_t>(p) * n];
        double* vq = &v[static_cast<size_t>(q) * n];
        for (int i = 0; i < n; ++i) {
          const double xp = wp[i], xq = wq[i];
          wp[i] = c * xp - s * xq;
          wq[i] = s * xp + c * xq;
          const double yp = vp[i], yq = vq[i];
          vp[i] = c * yp - s * yq;
          vq[i] = s * yp + c * yq;
        }
      }
    }
    converged = (worst <= kOffTol);
  }
  if (!converged && worst > kOffTol) {
    // one extra measurement pass: the final sweep may have finished the job
    double resid = 0.0;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double* wp = &w[static_cast<size_t>(p) * n];
        const double* wq = &w[static_cast<size_t>(q) * n];
        double alpha = 0.0, beta = 0.0, gam = 0.0;
        for (int i = 0; i < n; ++i) {
          alpha = std::fma(wp[i], wp[i], alpha);
          beta = std::fma(wq[i], wq[i], beta);
          gam = std::fma(wp[i], wq[i], gam);
        }
        if (alpha <= deflate || beta <= deflate) continue;
        resid = std::max(resid, std::abs(gam) / std::sqrt(alpha * beta));
      }
    }
    if (resid > kOffTol)
      throw std::runtime_error("svd_small: no convergence after 100 sweeps, off-diagonal residual " +
                               std::to_string(resid));
  }

  SvdResult r;
  r.sigma.assign(n, 0.0);
  std::vector<int> order(n);
  for (int j = 0; j < n; ++j) {
    double acc = 0.0;
    const double* wj = &w[static_cast<size_t>(j) * n];
    for (int i = 0; i < n; ++i) acc = std::fma(wj[i], wj[i], acc);
    r.sigma[j] = acc <= deflate ? 0.0 : std::sqrt(acc);
    order[j] = j;
  }
  // deterministic descending sort (stable selection)
  for (int i = 0; i < n; ++i) {
    int best = i;
    for (int j = i + 1; j < n; ++j)
      if (r.sigma[order[j]] > r.sigma[order[best]]) best = j;
    std::swap(order[i], order[best]);
  }

  Vec sorted(n);
  r.u = Mat(n, n);
  r.v = Mat(n, n);
  int n_zero = 0;
  for (int jj = 0; jj < n; ++jj) {
    const int j = order[jj];
    sorted[jj] = r.sigma[j];
    const double* wj = &w[static_cast<size_t>(j) * n];
    const double* vj = &v[static_cast<size_t>(j) * n];
    if (r.sigma[j] > 0.0) {
      const double inv = 1.0 / r.sigma[j];
      for (int i = 0; i < n; ++i) r.u.at(i, jj) = wj[i] * inv;
    } else {
      ++n_zero;  // filled below by orthonormal completion
    }
    for (int i = 0; i < n; ++i) r.v.at(i, jj) = vj[i];
  }
  r.sigma = std::move(sorted);

  if (n_zero > 0) {
    // complete U with unit vectors orthogonalized against the nonzero columns
    const int first_zero = n - n_zero;
    int next_axis = 0;
    for (int jj = first_zero; jj < n; ++jj) {
      Vec col(n, 0.0);
      double norm = 0.0;
      while (norm < 0.5 && next_axis < n) {
        std::fill(col.begin(), col.end(), 0.0);
        col[next_axis++] = 1.0;
        for (int k = 0; k < jj; ++k) {
          double dot = 0.0;
          for (int i = 0; i < n; ++i) dot += r.u.at(i, k) * col[i];
          for (int i = 0; i < n; ++i) col[i] -= dot * r.u.at(i, k);
        }
        norm = 0.0;
        for (int i = 0; i < n; ++i) norm += col[i] * col[i];
        norm = std::sqrt(norm);
      }
      for (int i = 0; i < n; ++i) r.u.at(i, jj) = col[i] / norm;
    }
  }
  return r;
}

Mat clip_singular_values(const Mat& a, double delta) {
  require(a.rows == a.cols, "clip_singular_values: matrix must be square");
  require(delta > 0.0 && delta < 1.0, "clip_singular_values: delta must be in (0,1)");
  SvdResult svd = svd_small(a);
  if (svd.sigma.empty() || svd.sigma[0] <= delta) return a;
  const int n = a.rows;
  Mat us = svd.u;  // columns scaled by clipped singular values
  for (int j = 0; j < n; ++j) {
    const double s = std::min(svd.sigma[j], delta);
    for (int i = 0; i < n; ++i) us.at(i, j) *= s;
  }
  return gemm(us, transposed(svd.v));
}

double spectral_norm(const Mat& a) {
  SvdResult svd = svd_small(a);
  return svd.sigma.empty() ? 0.0 : svd.sigma[0];
}

// ===== RNG =====

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

int Rng::bounded_int(int n) {
  if (n <= 0) throw std::invalid_argument("bounded_int: n must be positive");
  if (n == 1) return 0;
  std::uint64_t mask = n - 1;
  mask |= mask >> 1;
  mask |= mask >> 2;
  mask |= mask >> 4;
  mask |= mask >> 8;
  mask |= mask >> 16;
  mask |= mask >> 32;
  for (;;) {
    const std::uint64_t v = gen_() & mask;
    if (v < static_cast<std::uint64_t>(n)) return static_cast<int>(v);
  }
}

std::string Rng::state() const {
  std::ostringstream out;
  out << gen_ << ' ' << (has_spare_ ? 1 : 0);
  if (has_spare_) {
    std::uint64_t bits;
    std::memcpy(&bits, &spare_, sizeof bits);
    out << ' ' << bits;
  }
  return out.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream in(s);
  in >> gen_;
  int flag = 0;
  in >> flag;
  if (in.fail()) throw std::invalid_argument("Rng::set_state: malformed state string");
  has_spare_ = (flag != 0);
  spare_ = 0.0;
  if (has_spare_) {
    std::uint64_t bits = 0;
    in >> bits;
    if (in.fail()) throw std::invalid_argument("Rng::set_state: malformed spare value");
    std::memcpy(&spare_, &bits, sizeof spare_);
  }
}

}  // namespace durnn
