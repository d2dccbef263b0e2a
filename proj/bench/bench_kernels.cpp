// Copyright 2026 The PLSP Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include <vector>

#include "plsp/kernels.hpp"
#include "plsp/rng.hpp"

namespace {

using Gemm = void (*)(std::span<const double>, std::span<const double>, std::span<double>, std::size_t,
                      std::size_t, std::size_t, bool);

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  plsp::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = plsp::standard_normal(rng);
  return v;
}

// Shapes: stacked batch rows × layer fan-in × fan-out.
template <Gemm kFn>
void BM_GemmNN(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1)),
             n = static_cast<std::size_t>(state.range(2));
  const auto a = filled(m * k, 1), b = filled(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    kFn(a, b, c, m, k, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

template <Gemm kFn>
void BM_GemmTN(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0)), k = static_cast<std::size_t>(state.range(1)),
             n = static_cast<std::size_t>(state.range(2));
  const auto a = filled(k * m, 3), b = filled(k * n, 4);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    kFn(a, b, c, m, k, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

template <void (*kFn)(std::span<const double>, std::span<double>, std::size_t, std::size_t)>
void BM_RowLogsumexp(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = static_cast<std::size_t>(state.range(1));
  const auto x = filled(rows * cols, 5);
  std::vector<double> out(rows);
  for (auto _ : state) {
    kFn(x, out, rows, cols);
    benchmark::DoNotOptimize(out.data());
  }
}

void gemm_args(benchmark::internal::Benchmark* b) {
  b->Args({576, 2, 128})->Args({576, 128, 64})->Args({576, 64, 10})->Args({2048, 256, 256});
}

}  // namespace

BENCHMARK(BM_GemmNN<plsp::kernels::gemm_nn>)->Name("gemm_nn/openmp")->Apply(gemm_args);
BENCHMARK(BM_GemmNN<plsp::kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Apply(gemm_args);
BENCHMARK(BM_GemmTN<plsp::kernels::gemm_tn>)->Name("gemm_tn/openmp")->Args({128, 576, 64})->Args({256, 2048, 256});
BENCHMARK(BM_GemmTN<plsp::kernels::serial::gemm_tn>)->Name("gemm_tn/serial")->Args({128, 576, 64})->Args({256, 2048, 256});
BENCHMARK(BM_RowLogsumexp<plsp::kernels::row_logsumexp>)->Name("row_logsumexp/openmp")->Args({576, 10})->Args({4096, 100});
BENCHMARK(BM_RowLogsumexp<plsp::kernels::serial::row_logsumexp>)->Name("row_logsumexp/serial")->Args({576, 10})->Args({4096, 100});

BENCHMARK_MAIN();
