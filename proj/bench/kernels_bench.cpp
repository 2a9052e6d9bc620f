// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "onorm/tensor.hpp"

namespace {

using onorm::FeatureMap;
using onorm::Matrix;
using onorm::Rng;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return Matrix(r, c, std::move(v));
}

FeatureMap random_map(std::size_t f, std::size_t s, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(f * s);
  for (auto& x : v) x = rng.normal();
  return FeatureMap(f, s, std::move(v));
}

template <Matrix (*Fn)(const Matrix&, const Matrix&)>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1);
  const auto b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <std::vector<double> (*Fn)(const Matrix&, std::span<const double>)>
void BM_Matvec(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 3);
  const auto x = random_matrix(n, 1, 4);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, x.data()));
}

template <std::vector<double> (*Fn)(const FeatureMap&)>
void BM_FeatureStat(benchmark::State& state) {
  const auto m = random_map(static_cast<std::size_t>(state.range(0)), 4096, 5);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(m));
}

}  // namespace

BENCHMARK(BM_Matmul<onorm::serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<onorm::matmul>)->Name("matmul/openmp")->Arg(64)->Arg(256);
BENCHMARK(BM_Matvec<onorm::serial::matvec>)->Name("matvec/serial")->Arg(256)->Arg(2048);
BENCHMARK(BM_Matvec<onorm::matvec>)->Name("matvec/openmp")->Arg(256)->Arg(2048);
BENCHMARK(BM_Matvec<onorm::serial::matvec_transposed>)->Name("matvec_transposed/serial")->Arg(256)->Arg(2048);
BENCHMARK(BM_Matvec<onorm::matvec_transposed>)->Name("matvec_transposed/openmp")->Arg(256)->Arg(2048);
BENCHMARK(BM_FeatureStat<onorm::serial::feature_var>)->Name("feature_var/serial")->Arg(16)->Arg(256);
BENCHMARK(BM_FeatureStat<onorm::feature_var>)->Name("feature_var/openmp")->Arg(16)->Arg(256);

BENCHMARK_MAIN();
