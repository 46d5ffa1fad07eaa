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

// Finite-difference oracle for the autodiff ops. Each case pairs a float op
// on the tape with an independent double-precision forward implementation;
// gradients of a random projection of the output are compared against
// central differences of the double reference.

#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "capa/ops.hpp"
#include "capa/random.hpp"
#include "capa/tensor.hpp"

namespace capa::testing {

using DVec = std::vector<double>;

struct OpInstance {
  std::vector<Tensor> inputs;
  std::vector<bool> differentiable;
  std::function<Tensor(const std::vector<Tensor>&)> op;
  std::function<DVec(const std::vector<DVec>&)> reference;
};

struct OpCase {
  std::string name;
  std::function<OpInstance(Rng&)> make;
};

struct GradCheckOutcome {
  bool ok = true;
  double worst = 0.0;  // max |analytic - numeric| / allowed
  std::string detail;
};

inline constexpr double kGradStep = 1e-3;
inline constexpr double kGradRtol = 1e-4;
inline constexpr double kGradAtol = 1e-6;

inline GradCheckOutcome grad_check(const OpInstance& inst, Rng& rng) {
  GradCheckOutcome outcome;
  // Analytic side.
  std::vector<Tensor> inputs;
  for (std::size_t i = 0; i < inst.inputs.size(); ++i) {
    Tensor t = inst.inputs[i].clone();
    t.set_requires_grad(inst.differentiable[i]);
    inputs.push_back(t);
  }
  Tape tape;
  Tensor out = inst.op(inputs);
  Tensor w(out.shape());
  for (float& v : w.mutable_values()) v = static_cast<float>(uniform(rng, -1.0, 1.0));
  Tensor loss = ops::sum(ops::mul(out, w));
  tape.backward(loss);

  // Numeric side in double.
  std::vector<DVec> ref_inputs;
  for (const auto& t : inst.inputs) ref_inputs.emplace_back(t.values().begin(), t.values().end());
  const auto projected = [&](const std::vector<DVec>& in) {
    const DVec y = inst.reference(in);
    double s = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) s += y[k] * static_cast<double>(w.values()[k]);
    return s;
  };
  {
    const DVec y = inst.reference(ref_inputs);
    if (y.size() != out.numel()) {
      outcome.ok = false;
      outcome.detail = "reference output size mismatch";
      return outcome;
    }
    for (std::size_t k = 0; k < y.size(); ++k) {
      const double diff = std::fabs(y[k] - out.values()[k]);
      if (diff > 1e-4 * std::fabs(y[k]) + 1e-5) {
        outcome.ok = false;
        std::ostringstream os;
        os << "forward mismatch at " << k << ": " << out.values()[k] << " vs " << y[k];
        outcome.detail = os.str();
        return outcome;
      }
    }
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inst.differentiable[i]) continue;
    const auto g = tape.grad(inputs[i]);
    for (std::size_t k = 0; k < ref_inputs[i].size(); ++k) {
      const double x0 = ref_inputs[i][k];
      ref_inputs[i][k] = x0 + kGradStep;
      const double up = projected(ref_inputs);
      ref_inputs[i][k] = x0 - kGradStep;
      const double down = projected(ref_inputs);
      ref_inputs[i][k] = x0;
      const double numeric = (up - down) / (2.0 * kGradStep);
      const double analytic = g.empty() ? 0.0 : g[k];
      const double allowed = std::max(kGradRtol * std::fabs(numeric), kGradAtol);
      const double ratio = std::fabs(analytic - numeric) / allowed;
      if (ratio > outcome.worst) outcome.worst = ratio;
      if (ratio > 1.0 && outcome.ok) {
        outcome.ok = false;
        std::ostringstream os;
        os << "input " << i << " entry " << k << ": analytic " << analytic << " numeric "
           << numeric;
        outcome.detail = os.str();
      }
    }
  }
  return outcome;
}

namespace detail {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (float& v : t.mutable_values()) v = static_cast<float>(uniform(rng, lo, hi));
  return t;
}

inline std::size_t dim(Rng& rng, std::size_t lo = 1, std::size_t hi = 6) {
  return lo + uniform_index(rng, hi - lo + 1);
}

inline DVec ref_matmul(const DVec& a, const DVec& b, std::size_t m, std::size_t k, std::size_t n) {
  DVec c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * k + p] * b[p * n + j];
    }
  }
  return c;
}

inline DVec ref_transpose(const DVec& a, std::size_t m, std::size_t n) {
  DVec t(a.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  }
  return t;
}

inline DVec ref_softmax(const DVec& x, std::size_t m, std::size_t n) {
  DVec y(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    double hi = x[i * n];
    for (std::size_t j = 1; j < n; ++j) hi = std::max(hi, x[i * n + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += y[i * n + j] = std::exp(x[i * n + j] - hi);
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] /= s;
  }
  return y;
}

template <typename F>
DVec map(const DVec& x, F f) {
  DVec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

}  // namespace detail

/// Every differentiable op, each with a random-instance generator.
inline std::vector<OpCase> all_op_cases() {
  using namespace detail;
  std::vector<OpCase> cases;

  cases.push_back({"matmul", [](Rng& rng) {
    const auto m = dim(rng), k = dim(rng), n = dim(rng);
    return OpInstance{{random_tensor({m, k}, rng), random_tensor({k, n}, rng)}, {true, true},
                      [](const std::vector<Tensor>& x) { return ops::matmul(x[0], x[1]); },
                      [m, k, n](const std::vector<DVec>& x) { return ref_matmul(x[0], x[1], m, k, n); }};
  }});
  cases.push_back({"transpose", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    return OpInstance{{random_tensor({m, n}, rng)}, {true},
                      [](const std::vector<Tensor>& x) { return ops::transpose(x[0]); },
                      [m, n](const std::vector<DVec>& x) { return ref_transpose(x[0], m, n); }};
  }});
  cases.push_back({"add", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    return OpInstance{{random_tensor({m, n}, rng), random_tensor({m, n}, rng)}, {true, true},
                      [](const std::vector<Tensor>& x) { return ops::add(x[0], x[1]); },
                      [](const std::vector<DVec>& x) {
                        DVec y(x[0].size());
                        for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[0][i] + x[1][i];
                        return y;
                      }};
  }});
  cases.push_back({"sub", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    return OpInstance{{random_tensor({m, n}, rng), random_tensor({m, n}, rng)}, {true, true},
                      [](const std::vector<Tensor>& x) { return ops::sub(x[0], x[1]); },
                      [](const std::vector<DVec>& x) {
                        DVec y(x[0].size());
                        for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[0][i] - x[1][i];
                        return y;
                      }};
  }});
  cases.push_back({"mul", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    return OpInstance{{random_tensor({m, n}, rng), random_tensor({m, n}, rng)}, {true, true},
                      [](const std::vector<Tensor>& x) { return ops::mul(x[0], x[1]); },
                      [](const std::vector<DVec>& x) {
                        DVec y(x[0].size());
                        for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[0][i] * x[1][i];
                        return y;
                      }};
  }});
  cases.push_back({"scale", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    const auto f = static_cast<float>(uniform(rng, -3.0, 3.0));
    return OpInstance{{random_tensor({m, n}, rng)}, {true},
                      [f](const std::vector<Tensor>& x) { return ops::scale(x[0], f); },
                      [f](const std::vector<DVec>& x) {
                        return map(x[0], [f](double v) { return static_cast<double>(f) * v; });
                      }};
  }});
  cases.push_back({"add_row_bias", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    return OpInstance{{random_tensor({m, n}, rng), random_tensor({n}, rng)}, {true, true},
                      [](const std::vector<Tensor>& x) { return ops::add_row_bias(x[0], x[1]); },
                      [m, n](const std::vector<DVec>& x) {
                        DVec y(m * n);
                        for (std::size_t i = 0; i < m; ++i) {
                          for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x[0][i * n + j] + x[1][j];
                        }
                        return y;
                      }};
  }});
  cases.push_back({"affine", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    const auto f = static_cast<float>(uniform(rng, 0.1, 3.0));
    const auto s = static_cast<float>(uniform(rng, -2.0, 2.0));
    return OpInstance{{random_tensor({m, n}, rng)}, {true},
                      [f, s](const std::vector<Tensor>& x) { return ops::affine(x[0], f, s); },
                      [f, s](const std::vector<DVec>& x) {
                        return map(x[0], [f, s](double v) {
                          return static_cast<double>(f) * v + static_cast<double>(s);
                        });
                      }};
  }});
  cases.push_back({"gelu", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    return OpInstance{{random_tensor({m, n}, rng, -3.0, 3.0)}, {true},
                      [](const std::vector<Tensor>& x) { return ops::gelu(x[0]); },
                      [](const std::vector<DVec>& x) {
                        return map(x[0], [](double v) {
                          const double a = std::sqrt(2.0 / 3.14159265358979323846);
                          return 0.5 * v * (1.0 + std::tanh(a * (v + 0.044715 * v * v * v)));
                        });
                      }};
  }});
  cases.push_back({"softplus", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    return OpInstance{{random_tensor({m, n}, rng, -4.0, 4.0)}, {true},
                      [](const std::vector<Tensor>& x) { return ops::softplus(x[0]); },
                      [](const std::vector<DVec>& x) {
                        return map(x[0], [](double v) { return std::log1p(std::exp(v)); });
                      }};
  }});
  cases.push_back({"layernorm_rows", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng, 2, 8);
    // Rows with near-zero spread make the normalization so curved that a
    // 1e-3 central difference is no longer accurate; resample those.
    Tensor x({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      double var = 0.0;
      do {
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          x.mutable_values()[i * n + j] = static_cast<float>(uniform(rng, -1.0, 1.0));
          mu += x.values()[i * n + j];
        }
        mu /= static_cast<double>(n);
        var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += std::pow(x.values()[i * n + j] - mu, 2);
        var /= static_cast<double>(n);
      } while (var < 0.2);
    }
    return OpInstance{{x, random_tensor({n}, rng, 0.5, 1.5),
                       random_tensor({n}, rng)},
                      {true, true, true},
                      [](const std::vector<Tensor>& x) { return ops::layernorm_rows(x[0], x[1], x[2]); },
                      [m, n](const std::vector<DVec>& x) {
                        DVec y(m * n);
                        for (std::size_t i = 0; i < m; ++i) {
                          double mu = 0.0;
                          for (std::size_t j = 0; j < n; ++j) mu += x[0][i * n + j];
                          mu /= static_cast<double>(n);
                          double var = 0.0;
                          for (std::size_t j = 0; j < n; ++j) {
                            const double d = x[0][i * n + j] - mu;
                            var += d * d;
                          }
                          var /= static_cast<double>(n);
                          const double is = 1.0 / std::sqrt(var + ops::kLayerNormEps);
                          for (std::size_t j = 0; j < n; ++j) {
                            y[i * n + j] = (x[0][i * n + j] - mu) * is * x[1][j] + x[2][j];
                          }
                        }
                        return y;
                      }};
  }});
  cases.push_back({"softmax_rows", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    return OpInstance{{random_tensor({m, n}, rng, -3.0, 3.0)}, {true},
                      [](const std::vector<Tensor>& x) { return ops::softmax_rows(x[0]); },
                      [m, n](const std::vector<DVec>& x) { return ref_softmax(x[0], m, n); }};
  }});
  cases.push_back({"concat_rows", [](Rng& rng) {
    const auto a = dim(rng), b = dim(rng), n = dim(rng);
    return OpInstance{{random_tensor({a, n}, rng), random_tensor({b, n}, rng)}, {true, true},
                      [](const std::vector<Tensor>& x) { return ops::concat_rows(x[0], x[1]); },
                      [](const std::vector<DVec>& x) {
                        DVec y = x[0];
                        y.insert(y.end(), x[1].begin(), x[1].end());
                        return y;
                      }};
  }});
  cases.push_back({"slice_rows", [](Rng& rng) {
    const auto m = dim(rng, 2, 7), n = dim(rng);
    const auto from = uniform_index(rng, m);
    const auto to = from + 1 + uniform_index(rng, m - from);
    return OpInstance{{random_tensor({m, n}, rng)}, {true},
                      [from, to](const std::vector<Tensor>& x) { return ops::slice_rows(x[0], from, to); },
                      [from, to, n](const std::vector<DVec>& x) {
                        return DVec(x[0].begin() + static_cast<std::ptrdiff_t>(from * n),
                                    x[0].begin() + static_cast<std::ptrdiff_t>(to * n));
                      }};
  }});
  cases.push_back({"gather", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    const auto r = dim(rng), c = dim(rng);
    std::vector<std::size_t> index(r * c);
    for (auto& i : index) i = uniform_index(rng, m * n);  // repeats exercise scatter-add
    return OpInstance{{random_tensor({m, n}, rng)}, {true},
                      [index, r, c](const std::vector<Tensor>& x) { return ops::gather(x[0], {r, c}, index); },
                      [index](const std::vector<DVec>& x) {
                        DVec y(index.size());
                        for (std::size_t i = 0; i < index.size(); ++i) y[i] = x[0][index[i]];
                        return y;
                      }};
  }});
  cases.push_back({"sum", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    return OpInstance{{random_tensor({m, n}, rng)}, {true},
                      [](const std::vector<Tensor>& x) { return ops::sum(x[0]); },
                      [](const std::vector<DVec>& x) {
                        double s = 0.0;
                        for (double v : x[0]) s += v;
                        return DVec{s};
                      }};
  }});
  cases.push_back({"mean", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    return OpInstance{{random_tensor({m, n}, rng)}, {true},
                      [](const std::vector<Tensor>& x) { return ops::mean(x[0]); },
                      [](const std::vector<DVec>& x) {
                        double s = 0.0;
                        for (double v : x[0]) s += v;
                        return DVec{s / static_cast<double>(x[0].size())};
                      }};
  }});
  cases.push_back({"l1_loss_masked", [](Rng& rng) {
    const auto m = dim(rng), n = dim(rng);
    Tensor pred = random_tensor({m, n}, rng);
    Tensor target(pred.shape());
    Tensor mask(pred.shape());
    for (std::size_t i = 0; i < pred.numel(); ++i) {
      // Keep residuals away from the kink so central differences are valid.
      const double offset = uniform(rng, 0.01, 1.0) * (uniform01(rng) < 0.5 ? -1.0 : 1.0);
      target.mutable_values()[i] = static_cast<float>(pred.values()[i] + offset);
      mask.mutable_values()[i] = uniform01(rng) < 0.6 ? 1.0F : 0.0F;
    }
    return OpInstance{{pred, target, mask}, {true, false, false},
                      [](const std::vector<Tensor>& x) { return ops::l1_loss_masked(x[0], x[1], x[2]); },
                      [](const std::vector<DVec>& x) {
                        double s = 0.0;
                        std::size_t count = 0;
                        for (std::size_t i = 0; i < x[0].size(); ++i) {
                          if (x[2][i] != 0.0) {
                            s += std::fabs(x[0][i] - x[1][i]);
                            ++count;
                          }
                        }
                        return DVec{s / static_cast<double>(std::max<std::size_t>(1, count))};
                      }};
  }});
  cases.push_back({"scaled_dot_attention", [](Rng& rng) {
    const auto lq = dim(rng), lkv = dim(rng), d = dim(rng, 2, 6), k = dim(rng, 2, 6);
    return OpInstance{{random_tensor({lq, d}, rng), random_tensor({lkv, d}, rng),
                       random_tensor({d, k}, rng), random_tensor({d, k}, rng),
                       random_tensor({d, k}, rng)},
                      {true, true, true, true, true},
                      [](const std::vector<Tensor>& x) {
                        return ops::scaled_dot_attention(x[0], x[1], x[2], x[3], x[4]);
                      },
                      [lq, lkv, d, k](const std::vector<DVec>& x) {
                        const DVec q = ref_matmul(x[0], x[2], lq, d, k);
                        const DVec kk = ref_matmul(x[1], x[3], lkv, d, k);
                        const DVec v = ref_matmul(x[1], x[4], lkv, d, k);
                        DVec s = ref_matmul(q, ref_transpose(kk, lkv, k), lq, k, lkv);
                        for (double& e : s) e /= std::sqrt(static_cast<double>(k));
                        return ref_matmul(ref_softmax(s, lq, lkv), v, lq, lkv, k);
                      }};
  }});
  return cases;
}

}  // namespace capa::testing
