// Serial reference versus OpenMP kernels on the hot paths.
#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "hetero/hessian.hpp"
#include "hetero/kernels.hpp"
#include "hetero/objectives.hpp"
#include "hetero/rng.hpp"

namespace {

std::vector<double> random_vector(std::size_t n) {
  hetero::Rng rng(7);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

void BM_SumSqSerial(benchmark::State& state) {
  const auto v = random_vector(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(hetero::kernels::serial::sum_sq(v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SumSqParallel(benchmark::State& state) {
  const auto v = random_vector(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(hetero::kernels::sum_sq(v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(BM_SumSqSerial)->RangeMultiplier(8)->Range(1 << 12, 1 << 24);
BENCHMARK(BM_SumSqParallel)->RangeMultiplier(8)->Range(1 << 12, 1 << 24);

const hetero::SoftmaxLinearObjective& softmax() {
  static const auto obj = hetero::SoftmaxLinearObjective::synthetic(8192, 64, 10, 3);
  return obj;
}

void BM_SoftmaxGradSerial(benchmark::State& state) {
  const auto& obj = softmax();
  const auto theta = hetero::BlockedVector::filled(obj.block_spec(), 0.01);
  std::vector<std::size_t> all(obj.num_samples());
  std::iota(all.begin(), all.end(), 0);
  for (auto _ : state) benchmark::DoNotOptimize(obj.gradient_serial(theta, all));
}

void BM_SoftmaxGradParallel(benchmark::State& state) {
  const auto& obj = softmax();
  const auto theta = hetero::BlockedVector::filled(obj.block_spec(), 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(obj.gradient(theta));
}

BENCHMARK(BM_SoftmaxGradSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SoftmaxGradParallel)->Unit(benchmark::kMillisecond);

void BM_BlockSpectraSerial(benchmark::State& state) {
  const auto obj = hetero::build_quadratic(hetero::QuadraticSetting::Homo, 0);
  const auto theta = hetero::BlockedVector::filled(obj.block_spec(), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(hetero::block_spectral_report_serial(obj, theta));
}

void BM_BlockSpectraParallel(benchmark::State& state) {
  const auto obj = hetero::build_quadratic(hetero::QuadraticSetting::Homo, 0);
  const auto theta = hetero::BlockedVector::filled(obj.block_spec(), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(hetero::block_spectral_report(obj, theta));
}

BENCHMARK(BM_BlockSpectraSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BlockSpectraParallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
