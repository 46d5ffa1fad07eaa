// Copyright 2026 The capa Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// OpenMP kernels against their serial reference versions. Shapes follow the
// default model: 64 tokens (+16 prompts) of width 64, MLP width 256.

#include <benchmark/benchmark.h>

#include <vector>

#include "capa/kernels.hpp"
#include "capa/random.hpp"

namespace {

using capa::kernels::Trans;

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
  capa::Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(capa::uniform(rng, -1.0, 1.0));
  return v;
}

template <bool kParallel>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = random_vector(m * k, 1);
  const auto b = random_vector(k * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      capa::kernels::gemm(Trans::kNo, Trans::kNo, m, n, k, a, b, c);
    } else {
      capa::kernels::reference::gemm(Trans::kNo, Trans::kNo, m, n, k, a, b, c);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * m * n * k));
}

template <bool kParallel>
void BM_GemmTransposedB(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = random_vector(m * k, 1);
  const auto b = random_vector(k * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      capa::kernels::gemm(Trans::kNo, Trans::kYes, m, n, k, a, b, c);
    } else {
      capa::kernels::reference::gemm(Trans::kNo, Trans::kYes, m, n, k, a, b, c);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * m * n * k));
}

template <bool kParallel>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto cols = static_cast<std::size_t>(state.range(1));
  const auto x = random_vector(rows * cols, 3);
  std::vector<float> y(rows * cols);
  for (auto _ : state) {
    if constexpr (kParallel) {
      capa::kernels::softmax_rows(rows, cols, x, y);
    } else {
      capa::kernels::reference::softmax_rows(rows, cols, x, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool kParallel>
void BM_LayerNorm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto cols = static_cast<std::size_t>(state.range(1));
  const auto x = random_vector(rows * cols, 4);
  const std::vector<float> gain(cols, 1.0F);
  const std::vector<float> bias(cols, 0.0F);
  std::vector<float> y(rows * cols);
  std::vector<float> xhat(rows * cols);
  std::vector<float> inv_std(rows);
  for (auto _ : state) {
    if constexpr (kParallel) {
      capa::kernels::layernorm_rows(rows, cols, x, gain, bias, 1e-5F, y, xhat, inv_std);
    } else {
      capa::kernels::reference::layernorm_rows(rows, cols, x, gain, bias, 1e-5F, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

void GemmShapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 64, 64})->Args({80, 64, 256})->Args({80, 256, 64})->Args({256, 256, 256});
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Name("gemm/openmp")->Apply(GemmShapes);
BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Apply(GemmShapes);
BENCHMARK(BM_GemmTransposedB<true>)->Name("gemm_nt/openmp")->Apply(GemmShapes);
BENCHMARK(BM_GemmTransposedB<false>)->Name("gemm_nt/reference")->Apply(GemmShapes);
BENCHMARK(BM_Softmax<true>)->Name("softmax/openmp")->Args({80, 80})->Args({1024, 1024});
BENCHMARK(BM_Softmax<false>)->Name("softmax/reference")->Args({80, 80})->Args({1024, 1024});
BENCHMARK(BM_LayerNorm<true>)->Name("layernorm/openmp")->Args({80, 64})->Args({4096, 64});
BENCHMARK(BM_LayerNorm<false>)->Name("layernorm/reference")->Args({80, 64})->Args({4096, 64});

BENCHMARK_MAIN();
