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

namespace capa {

using Gradients = std::vector<std::vector<float>>;

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay and bias correction:
///   p <- p - lr·wd·p - lr·m_hat / (sqrt(v_hat) + eps)
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig config);

  /// One update; `grads[i]` matches params[i]. Updates the tensors in place.
  void step(const Gradients& grads, double lr);

  std::size_t steps() const noexcept { return steps_; }
  const std::vector<float>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<float>& second_moment(std::size_t i) const { return v_[i]; }
  const std::vector<Tensor>& parameters() const noexcept { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamWConfig config_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::size_t steps_ = 0;
};

double global_norm(const Gradients& grads);

/// Scales every gradient by max_norm / ||g|| when the joint L2 norm exceeds
/// max_norm. Returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

/// Zero-filled buffers shaped like `params`.
Gradients zeros_like(const std::vector<Tensor>& params);

/// Adds the tape's gradient for each parameter into `grads` (no-op for
/// parameters the backward pass did not reach).
void accumulate_gradients(const Tape& tape, const std::vector<Tensor>& params, Gradients& grads,
                          float weight = 1.0F);

}  // namespace capa
