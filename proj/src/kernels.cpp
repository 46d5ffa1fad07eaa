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

#include "capa/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

namespace capa::kernels {
namespace {

// Work (in multiply-adds) below which spawning a team costs more than it saves.
constexpr std::size_t kParallelWork = 1U << 16;

void transpose_into(std::size_t rows, std::size_t cols, const float* src, float* dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      dst[c * rows + r] = src[r * cols + c];
    }
  }
}

}  // namespace

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const float> a, std::span<const float> b, std::span<float> c,
          bool accumulate) {
  // Normalize to row-major A[m×k], B[k×n] so the inner loop runs unit-stride.
  std::vector<float> a_packed;
  std::vector<float> b_packed;
  const float* pa = a.data();
  const float* pb = b.data();
  if (trans_a == Trans::kYes) {
    a_packed.resize(m * k);
    transpose_into(k, m, a.data(), a_packed.data());
    pa = a_packed.data();
  }
  if (trans_b == Trans::kYes) {
    b_packed.resize(k * n);
    transpose_into(n, k, b.data(), b_packed.data());
    pb = b_packed.data();
  }
  float* pc = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);

#pragma omp parallel for schedule(static) if (m * n * k >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    float* __restrict crow = pc + static_cast<std::size_t>(i) * n;
    if (!accumulate) {
      std::fill(crow, crow + n, 0.0F);
    }
    const float* arow = pa + static_cast<std::size_t>(i) * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      const float* __restrict brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const float> x,
                  std::span<float> y) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (std::ptrdiff_t r = 0; r < nrows; ++r) {
    const float* xr = x.data() + static_cast<std::size_t>(r) * cols;
    float* yr = y.data() + static_cast<std::size_t>(r) * cols;
    float hi = xr[0];
    for (std::size_t j = 1; j < cols; ++j) hi = std::max(hi, xr[j]);
    float total = 0.0F;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - hi);
      total += yr[j];
    }
    const float inv = 1.0F / total;
    for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

void layernorm_rows(std::size_t rows, std::size_t cols, std::span<const float> x,
                    std::span<const float> gain, std::span<const float> bias, float eps,
                    std::span<float> y, std::span<float> xhat, std::span<float> inv_std) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (std::ptrdiff_t r = 0; r < nrows; ++r) {
    const std::size_t off = static_cast<std::size_t>(r) * cols;
    const float* xr = x.data() + off;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += xr[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = xr[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = static_cast<float>(is);
    for (std::size_t j = 0; j < cols; ++j) {
      const auto h = static_cast<float>((xr[j] - mu) * is);
      xhat[off + j] = h;
      y[off + j] = h * gain[j] + bias[j];
    }
  }
}

int configure_threads_from_env() {
  int threads = 0;
  if (const char* env = std::getenv("CAPA_THREADS"); env != nullptr) {
    try {
      threads = std::stoi(env);
    } catch (...) {
      threads = 0;
    }
  }
  if (threads > 0) {
    omp_set_num_threads(threads);
  }
  return omp_get_max_threads();
}

namespace reference {

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const float> a, std::span<const float> b, std::span<float> c,
          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const float av = trans_a == Trans::kYes ? a[p * m + i] : a[i * k + p];
        const float bv = trans_b == Trans::kYes ? b[j * k + p] : b[p * n + j];
        acc += static_cast<double>(av) * bv;
      }
      c[i * n + j] = static_cast<float>(acc);
    }
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const float> x,
                  std::span<float> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double hi = x[r * cols];
    for (std::size_t j = 1; j < cols; ++j) hi = std::max<double>(hi, x[r * cols + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += std::exp(x[r * cols + j] - hi);
    for (std::size_t j = 0; j < cols; ++j) {
      y[r * cols + j] = static_cast<float>(std::exp(x[r * cols + j] - hi) / total);
    }
  }
}

void layernorm_rows(std::size_t rows, std::size_t cols, std::span<const float> x,
                    std::span<const float> gain, std::span<const float> bias, float eps,
                    std::span<float> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += x[r * cols + j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = x[r * cols + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      y[r * cols + j] = static_cast<float>((x[r * cols + j] - mu) * is * gain[j] + bias[j]);
    }
  }
}

}  // namespace reference
}  // namespace capa::kernels
