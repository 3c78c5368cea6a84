// ===== bench_cell.cpp =====
// End-to-end cost of one training step at the shipped sizes: full-sequence
// forward, forward+backward, and the per-update constraint projection.

#include <benchmark/benchmark.h>

#include <vector>

#include "durnn/cell.hpp"
#include "durnn/grad.hpp"
#include "durnn/optim.hpp"

using namespace durnn;

namespace {

struct Instance {
  Network net;
  std::vector<Mat> xs;
};

Instance make_instance(Variant v, int neurons, int steps, int batch, unsigned long long seed) {
  Rng rng(seed);
  LayerSpec spec;
  spec.neurons = neurons;
  spec.input_dim = 2;
  spec.variant = v;
  spec.constraints = make_constraints(0.5, 2.0, steps, true);
  Instance inst{init_network({spec}, 1, 1.0, rng), {}};
  for (int t = 0; t < steps; ++t) {
    Mat x(2, batch);
    for (double& val : x.data) val = rng.uniform(-1.0, 1.0);
    inst.xs.push_back(std::move(x));
  }
  return inst;
}

void bm_forward_sequence(benchmark::State& state) {
  const int steps = static_cast<int>(state.range(0));
  Instance inst = make_instance(Variant::durnn, 128, steps, 50, 11);
  for (auto _ : state) {
    NetworkCache cache = forward_sequence(inst.net, inst.xs);
    benchmark::DoNotOptimize(cache.layer[0].step.back().h_long.data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_forward_sequence)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void bm_forward_backward(benchmark::State& state) {
  const int steps = static_cast<int>(state.range(0));
  Instance inst = make_instance(Variant::durnn, 128, steps, 50, 12);
  Vec targets(50, 1.0);
  for (auto _ : state) {
    NetworkCache cache = forward_sequence(inst.net, inst.xs);
    RegressionReadout ro =
        readout_regression(inst.net.head, cache.layer.back().output_at(steps), targets);
    NetworkGrads g = backward_sequence(inst.net, inst.xs, cache,
                                       loss_grads_at_last(steps, std::move(ro.g_h)));
    benchmark::DoNotOptimize(g.layers[0].g_w_rec.data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_forward_backward)->Arg(100)->Unit(benchmark::kMillisecond);

void bm_project_constraints(benchmark::State& state) {
  Instance inst = make_instance(Variant::durnn, 128, 10, 1, 13);
  for (auto _ : state) {
    project_constraints(inst.net);
    benchmark::DoNotOptimize(inst.net.layers[0].w_rec.data.data());
  }
}
BENCHMARK(bm_project_constraints)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
