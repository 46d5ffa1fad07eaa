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
#include <vector>

#include "capa/tensor.hpp"

// Differentiable operations on capa::Tensor. Every function validates
// extents (DimensionError) and records a backward rule on the active tape
// when any input requires gradient. No broadcasting except where the name
// says so (add_row_bias).
namespace capa::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);
/// x[m×n] + bias[n] added to every row.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
/// factor * x + shift, with both constants (no gradient to them).
Tensor affine(const Tensor& x, float factor, float shift);

/// tanh approximation.
Tensor gelu(const Tensor& x);
Tensor softplus(const Tensor& x);

inline constexpr float kLayerNormEps = 1e-6F;
Tensor layernorm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias);
/// Row-max stabilized; throws NumericError on NaN input.
Tensor softmax_rows(const Tensor& x);

Tensor concat_rows(const Tensor& top, const Tensor& bottom);
Tensor slice_rows(const Tensor& x, std::size_t from, std::size_t to);
/// out[i] = x[index[i]]; backward scatters. Used for patch (un)folding.
Tensor gather(const Tensor& x, Shape shape, const std::vector<std::size_t>& index);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// sum over mask of |pred - target| / max(1, #mask). Empty mask gives 0 with
/// zero gradient. `target` and `mask` receive no gradient.
Tensor l1_loss_masked(const Tensor& pred, const Tensor& target, const Tensor& mask);

/// Softmax(Q K^T / sqrt(d_k)) V with Q = x_q W_q, K = x_kv W_k, V = x_kv W_v.
Tensor scaled_dot_attention(const Tensor& x_q, const Tensor& x_kv, const Tensor& w_q,
                            const Tensor& w_k, const Tensor& w_v);

}  // namespace capa::ops
