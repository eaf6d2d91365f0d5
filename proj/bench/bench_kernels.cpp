// Serial reference vs OpenMP kernel for each parallel hot spot.

#include <benchmark/benchmark.h>

#include "fockqng/control.hpp"
#include "fockqng/metrology.hpp"
#include "fockqng/qng.hpp"

using namespace fockqng;

namespace {

qng::OptimizerConfig small_qng() {
  qng::OptimizerConfig cfg;
  cfg.restarts = 8;
  cfg.dim = 80;
  return cfg;
}

const std::vector<double> kAGrid{0.0, 0.05, 0.1, 0.2, 0.4, 0.7, 0.9, 1.5};

template <bool Parallel>
void BM_threshold_curve(benchmark::State& state) {
  const auto cfg = small_qng();
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto c = Parallel ? qng::threshold_curve(n, kAGrid, cfg) : qng::threshold_curve_serial(n, kAGrid, cfg);
    benchmark::DoNotOptimize(c.points.data());
  }
}

std::vector<double> alpha_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 400; ++k) g.push_back(3.0 * k / 400);
  return g;
}

template <bool Parallel>
void BM_fisher_profile(benchmark::State& state) {
  const auto g = alpha_grid();
  const FockDistribution d({0.05, 0.1, 0.15, 0.2, 0.2, 0.15, 0.1, 0.05});
  for (auto _ : state) {
    auto p = Parallel ? metrology::fisher_profile(d, g) : metrology::fisher_profile_serial(d, g);
    benchmark::DoNotOptimize(p.fi_max);
  }
}

template <bool Parallel>
void BM_rpn_basis(benchmark::State& state) {
  control::SystemParams p;
  p.qubit_levels = 2;
  p.phonon_levels = 8;
  const auto grid = control::uniform_grid(16e-6, 321);
  const auto noise = control::DeviceNoise::device();
  for (auto _ : state) {
    auto b = Parallel ? control::rpn_basis(6, p, noise, grid) : control::rpn_basis_serial(6, p, noise, grid);
    benchmark::DoNotOptimize(b.curves.data());
  }
}

template <bool Parallel>
void BM_grape(benchmark::State& state) {
  control::SystemParams p;
  p.phonon_levels = 5;
  control::GrapeConfig cfg;
  cfg.restarts = 4;
  cfg.max_iterations = 40;
  for (auto _ : state) {
    auto r = Parallel ? control::grape_optimize(1, 1.2e-6, p, cfg) : control::grape_optimize_serial(1, 1.2e-6, p, cfg);
    benchmark::DoNotOptimize(r.fidelity);
  }
}

}  // namespace

BENCHMARK(BM_threshold_curve<false>)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_threshold_curve<true>)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_fisher_profile<false>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_fisher_profile<true>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_rpn_basis<false>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_rpn_basis<true>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_grape<false>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_grape<true>)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
