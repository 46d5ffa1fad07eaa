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

#pragma once

#include <cstddef>
#include <span>

// Dense inner-loop kernels. The default namespace holds the OpenMP-parallel
// versions used by the ops; capa::kernels::reference holds straightforward
// serial versions that tests and benchmarks compare against.
namespace capa::kernels {

enum class Trans { kNo, kYes };

/// C[m×n] = op(A)·op(B) (or += when accumulate), op(A) is m×k, op(B) is k×n.
/// A is stored m×k (or k×m when transposed), B is k×n (or n×k).
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const float> a, std::span<const float> b, std::span<float> c,
          bool accumulate = false);

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const float> x,
                  std::span<float> y);

/// Writes normalized rows and per-row inverse std (for backward).
void layernorm_rows(std::size_t rows, std::size_t cols, std::span<const float> x,
                    std::span<const float> gain, std::span<const float> bias, float eps,
                    std::span<float> y, std::span<float> xhat, std::span<float> inv_std);

/// Number of threads the kernels may use (CAPA_THREADS; 0 or unset = auto).
int configure_threads_from_env();

namespace reference {

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const float> a, std::span<const float> b, std::span<float> c,
          bool accumulate = false);

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const float> x,
                  std::span<float> y);

void layernorm_rows(std::size_t rows, std::size_t cols, std::span<const float> x,
                    std::span<const float> gain, std::span<const float> bias, float eps,
                    std::span<float> y);

}  // namespace reference

}  // namespace capa::kernels
