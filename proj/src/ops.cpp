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

#include "capa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>

#include "capa/error.hpp"
#include "capa/kernels.hpp"

namespace capa::ops {
namespace {

using kernels::Trans;

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got rank " +
                         std::to_string(t.rank()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) throw DimensionError(std::string(op) + ": shape mismatch");
}

void accumulate(std::vector<float>* dst, std::span<const float> src) {
  if (dst == nullptr) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

void check_finite(std::span<const float> v, const char* op) {
  for (float x : v) {
    if (std::isnan(x)) throw NumericError(std::string(op) + ": NaN input");
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner extents " + std::to_string(k) + " and " +
                         std::to_string(b.rows()) + " differ");
  }
  Tensor out({m, n});
  kernels::gemm(Trans::kNo, Trans::kNo, m, n, k, a.values(), b.values(), out.mutable_values());
  if (Tape* tape = recording_tape({&a, &b})) {
    out.set_requires_grad(true);
    tape->record(out, [a, b, m, n, k](Tape& t, std::span<const float> g) {
      if (auto* ga = t.grad_buffer(a)) {
        kernels::gemm(Trans::kNo, Trans::kYes, m, k, n, g, b.values(), *ga, true);
      }
      if (auto* gb = t.grad_buffer(b)) {
        kernels::gemm(Trans::kYes, Trans::kNo, k, n, m, a.values(), g, *gb, true);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  require_matrix(x, "transpose");
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  Tensor out({c, r});
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) ov[j * r + i] = xv[i * c + j];
  if (Tape* tape = recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x, r, c](Tape& t, std::span<const float> g) {
      if (auto* gx = t.grad_buffer(x)) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += g[j * r + i];
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (Tape* tape = recording_tape({&a, &b})) {
    out.set_requires_grad(true);
    tape->record(out, [a, b](Tape& t, std::span<const float> g) {
      accumulate(t.grad_buffer(a), g);
      accumulate(t.grad_buffer(b), g);
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (Tape* tape = recording_tape({&a, &b})) {
    out.set_requires_grad(true);
    tape->record(out, [a, b](Tape& t, std::span<const float> g) {
      accumulate(t.grad_buffer(a), g);
      if (auto* gb = t.grad_buffer(b)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (Tape* tape = recording_tape({&a, &b})) {
    out.set_requires_grad(true);
    tape->record(out, [a, b](Tape& t, std::span<const float> g) {
      if (auto* ga = t.grad_buffer(a)) {
        auto bv = b.values();
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
      }
      if (auto* gb = t.grad_buffer(b)) {
        auto av = a.values();
        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, float factor) { return affine(x, factor, 0.0F); }

Tensor affine(const Tensor& x, float factor, float shift) {
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = factor * xv[i] + shift;
  if (Tape* tape = recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x, factor](Tape& t, std::span<const float> g) {
      if (auto* gx = t.grad_buffer(x)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += factor * g[i];
      }
    });
  }
  return out;
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_row_bias");
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  if (bias.numel() != c) throw DimensionError("add_row_bias: bias length mismatch");
  Tensor out(x.shape());
  auto xv = x.values();
  auto bv = bias.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) ov[i * c + j] = xv[i * c + j] + bv[j];
  if (Tape* tape = recording_tape({&x, &bias})) {
    out.set_requires_grad(true);
    tape->record(out, [x, bias, r, c](Tape& t, std::span<const float> g) {
      accumulate(t.grad_buffer(x), g);
      if (auto* gb = t.grad_buffer(bias)) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) (*gb)[j] += g[i * c + j];
      }
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  constexpr float kA = 0.7978845608028654F;  // sqrt(2/pi)
  constexpr float kB = 0.044715F;
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const float v = xv[i];
    ov[i] = 0.5F * v * (1.0F + std::tanh(kA * (v + kB * v * v * v)));
  }
  if (Tape* tape = recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x](Tape& t, std::span<const float> g) {
      if (auto* gx = t.grad_buffer(x)) {
        auto xv = x.values();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const float v = xv[i];
          const float th = std::tanh(kA * (v + kB * v * v * v));
          const float dth = (1.0F - th * th) * kA * (1.0F + 3.0F * kB * v * v);
          (*gx)[i] += g[i] * (0.5F * (1.0F + th) + 0.5F * v * dth);
        }
      }
    });
  }
  return out;
}

Tensor softplus(const Tensor& x) {
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const float v = xv[i];
    ov[i] = v > 20.0F ? v : std::log1p(std::exp(v));
  }
  if (Tape* tape = recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x](Tape& t, std::span<const float> g) {
      if (auto* gx = t.grad_buffer(x)) {
        auto xv = x.values();
        for (std::size_t i = 0; i < g.size(); ++i) {
          (*gx)[i] += g[i] / (1.0F + std::exp(-xv[i]));
        }
      }
    });
  }
  return out;
}

Tensor layernorm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  require_matrix(x, "layernorm_rows");
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  if (gain.numel() != c || bias.numel() != c) {
    throw DimensionError("layernorm_rows: gain/bias length mismatch");
  }
  Tensor out(x.shape());
  Tape* tape = recording_tape({&x, &gain, &bias});
  std::vector<float> xhat(r * c);
  std::vector<float> inv_std(r);
  kernels::layernorm_rows(r, c, x.values(), gain.values(), bias.values(), kLayerNormEps,
                          out.mutable_values(), xhat, inv_std);
  if (tape != nullptr) {
    out.set_requires_grad(true);
    tape->record(out, [x, gain, bias, r, c, xhat = std::move(xhat),
                       inv_std = std::move(inv_std)](Tape& t, std::span<const float> g) {
      if (auto* gg = t.grad_buffer(gain)) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) (*gg)[j] += g[i * c + j] * xhat[i * c + j];
      }
      if (auto* gb = t.grad_buffer(bias)) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) (*gb)[j] += g[i * c + j];
      }
      if (auto* gx = t.grad_buffer(x)) {
        auto gv = gain.values();
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t i = 0; i < r; ++i) {
          double mean_dh = 0.0;
          double mean_dh_h = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double dh = static_cast<double>(g[i * c + j]) * gv[j];
            mean_dh += dh;
            mean_dh_h += dh * xhat[i * c + j];
          }
          mean_dh *= inv_c;
          mean_dh_h *= inv_c;
          for (std::size_t j = 0; j < c; ++j) {
            const double dh = static_cast<double>(g[i * c + j]) * gv[j];
            (*gx)[i * c + j] += static_cast<float>(
                inv_std[i] * (dh - mean_dh - xhat[i * c + j] * mean_dh_h));
          }
        }
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  check_finite(x.values(), "softmax_rows");
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  Tensor out(x.shape());
  kernels::softmax_rows(r, c, x.values(), out.mutable_values());
  if (Tape* tape = recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x, out, r, c](Tape& t, std::span<const float> g) {
      if (auto* gx = t.grad_buffer(x)) {
        auto y = out.values();
        for (std::size_t i = 0; i < r; ++i) {
          float dot = 0.0F;
          for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
          for (std::size_t j = 0; j < c; ++j) {
            (*gx)[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
  require_matrix(top, "concat_rows");
  require_matrix(bottom, "concat_rows");
  if (top.cols() != bottom.cols()) throw DimensionError("concat_rows: column mismatch");
  const std::size_t split = top.numel();
  std::vector<float> values(top.values().begin(), top.values().end());
  values.insert(values.end(), bottom.values().begin(), bottom.values().end());
  Tensor out({top.rows() + bottom.rows(), top.cols()}, std::move(values));
  if (Tape* tape = recording_tape({&top, &bottom})) {
    out.set_requires_grad(true);
    tape->record(out, [top, bottom, split](Tape& t, std::span<const float> g) {
      accumulate(t.grad_buffer(top), g.subspan(0, split));
      accumulate(t.grad_buffer(bottom), g.subspan(split));
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t from, std::size_t to) {
  require_matrix(x, "slice_rows");
  if (from > to || to > x.rows()) throw DimensionError("slice_rows: range out of bounds");
  const std::size_t c = x.cols();
  auto xv = x.values();
  Tensor out({to - from, c}, std::vector<float>(xv.begin() + static_cast<std::ptrdiff_t>(from * c),
                                                xv.begin() + static_cast<std::ptrdiff_t>(to * c)));
  if (Tape* tape = recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x, from, c](Tape& t, std::span<const float> g) {
      if (auto* gx = t.grad_buffer(x)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[from * c + i] += g[i];
      }
    });
  }
  return out;
}

Tensor gather(const Tensor& x, Shape shape, const std::vector<std::size_t>& index) {
  if (capa::numel(shape) != index.size()) throw DimensionError("gather: index/shape mismatch");
  auto xv = x.values();
  std::vector<float> values(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.size()) throw DimensionError("gather: index out of range");
    values[i] = xv[index[i]];
  }
  Tensor out(std::move(shape), std::move(values));
  if (Tape* tape = recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x, index](Tape& t, std::span<const float> g) {
      if (auto* gx = t.grad_buffer(x)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[index[i]] += g[i];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  float total = 0.0F;
  for (float v : x.values()) total += v;
  Tensor out = Tensor::scalar(total);
  if (Tape* tape = recording_tape({&x})) {
    out.set_requires_grad(true);
    tape->record(out, [x](Tape& t, std::span<const float> g) {
      if (auto* gx = t.grad_buffer(x)) {
        for (float& v : *gx) v += g[0];
      }
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0F / static_cast<float>(x.numel()));
}

Tensor l1_loss_masked(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  require_same_shape(pred, target, "l1_loss_masked");
  require_same_shape(pred, mask, "l1_loss_masked");
  auto pv = pred.values();
  auto tv = target.values();
  auto mv = mask.values();
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (mv[i] != 0.0F) {
      ++count;
      total += std::fabs(static_cast<double>(pv[i]) - tv[i]);
    }
  }
  const float denom = static_cast<float>(std::max<std::size_t>(1, count));
  Tensor out = Tensor::scalar(static_cast<float>(total / denom));
  if (Tape* tape = recording_tape({&pred})) {
    out.set_requires_grad(true);
    tape->record(out, [pred, target, mask, denom](Tape& t, std::span<const float> g) {
      auto* gp = t.grad_buffer(pred);
      if (gp == nullptr) return;
      auto pv = pred.values();
      auto tv = target.values();
      auto mv = mask.values();
      const float w = g[0] / denom;
      for (std::size_t i = 0; i < pv.size(); ++i) {
        if (mv[i] == 0.0F) continue;
        const float d = pv[i] - tv[i];
        // Subgradient 0 at an exact tie.
        if (d > 0.0F) (*gp)[i] += w;
        else if (d < 0.0F) (*gp)[i] -= w;
      }
    });
  }
  return out;
}

Tensor scaled_dot_attention(const Tensor& x_q, const Tensor& x_kv, const Tensor& w_q,
                            const Tensor& w_k, const Tensor& w_v) {
  require_matrix(x_q, "attention");
  require_matrix(x_kv, "attention");
  if (x_q.cols() != x_kv.cols()) throw DimensionError("attention: channel extents differ");
  const std::size_t d_k = w_q.rank() == 2 ? w_q.cols() : 0;
  if (d_k == 0) throw DimensionError("attention: d_k must be positive");
  if (w_k.shape() != w_q.shape() || w_v.shape() != w_q.shape()) {
    throw DimensionError("attention: projection shapes differ");
  }
  const Tensor q = matmul(x_q, w_q);
  const Tensor k = matmul(x_kv, w_k);
  const Tensor v = matmul(x_kv, w_v);
  const Tensor scores = scale(matmul(q, transpose(k)), 1.0F / std::sqrt(static_cast<float>(d_k)));
  return matmul(softmax_rows(scores), v);
}

}  // namespace capa::ops
