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

#include "capa/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "capa/error.hpp"

namespace capa {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0F);
    v_.emplace_back(p.numel(), 0.0F);
  }
}

void AdamW::step(const Gradients& grads, double lr) {
  if (grads.size() != params_.size()) throw DimensionError("adamw: gradient count mismatch");
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i].mutable_values();
    const auto& g = grads[i];
    if (g.size() != p.size()) throw DimensionError("adamw: gradient shape mismatch");
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
      const double vj = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double pj = p[j];
      const double update = (mj / c1) / (std::sqrt(vj / c2) + config_.eps);
      p[j] = static_cast<float>(pj - lr * config_.weight_decay * pj - lr * update);
    }
  }
}

double global_norm(const Gradients& grads) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (float v : g) sq += static_cast<double>(v) * v;
  }
  return std::sqrt(sq);
}

double clip_global_norm(Gradients& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigurationError("clip_global_norm: max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const auto factor = static_cast<float>(max_norm / norm);
    for (auto& g : grads) {
      for (float& v : g) v *= factor;
    }
  }
  return norm;
}

Gradients zeros_like(const std::vector<Tensor>& params) {
  Gradients out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.numel(), 0.0F);
  return out;
}

void accumulate_gradients(const Tape& tape, const std::vector<Tensor>& params, Gradients& grads,
                          float weight) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = tape.grad(params[i]);
    if (g.empty()) continue;
    for (std::size_t j = 0; j < g.size(); ++j) grads[i][j] += weight * g[j];
  }
}

}  // namespace capa
