// ===== bench_linalg.cpp =====
// Microbenchmarks of the dense kernels that dominate training time: the
// recurrent GEMMs at the shipped layer width and the per-update SVD projection.

#include <benchmark/benchmark.h>

#include "durnn/linalg.hpp"

using namespace durnn;

namespace {

Mat random_mat(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  for (double& v : m.data) v = rng.uniform(-1.0, 1.0);
  return m;
}

void bm_gemm_square_by_batch(benchmark::State& state) {
  Rng rng(1);
  const int n = static_cast<int>(state.range(0));
  const int b = static_cast<int>(state.range(1));
  const Mat w = random_mat(n, n, rng);
  const Mat h = random_mat(n, b, rng);
  Mat out(n, b);
  for (auto _ : state) {
    gemm_into(out, w, h);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * b);
}
BENCHMARK(bm_gemm_square_by_batch)->Args({128, 50})->Args({128, 32})->Args({128, 1});

void bm_gemm_tn(benchmark::State& state) {
  Rng rng(2);
  const int n = static_cast<int>(state.range(0));
  const int b = static_cast<int>(state.range(1));
  const Mat w = random_mat(n, n, rng);
  const Mat g = random_mat(n, b, rng);
  Mat out(n, b);
  for (auto _ : state) {
    gemm_tn_into(out, w, g);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * b);
}
BENCHMARK(bm_gemm_tn)->Args({128, 50});

void bm_svd(benchmark::State& state) {
  Rng rng(3);
  const int n = static_cast<int>(state.range(0));
  const Mat a = random_mat(n, n, rng);
  for (auto _ : state) {
    SvdResult s = svd_small(a);
    benchmark::DoNotOptimize(s.sigma.data());
  }
}
BENCHMARK(bm_svd)->Arg(16)->Arg(64)->Arg(128);

void bm_clip_singular_values(benchmark::State& state) {
  Rng rng(4);
  const int n = static_cast<int>(state.range(0));
  const Mat a = random_mat(n, n, rng);
  for (auto _ : state) {
    Mat c = clip_singular_values(a, 0.9);
    benchmark::DoNotOptimize(c.data.data());
  }
}
BENCHMARK(bm_clip_singular_values)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
