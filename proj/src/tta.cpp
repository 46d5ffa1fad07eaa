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

#include "capa/tta.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numeric>

#include "capa/error.hpp"
#include "capa/ops.hpp"
#include "capa/random.hpp"

namespace capa {
namespace {

struct FrameData {
  std::size_t index = 0;
  Tensor image;
  Tensor target;
  Tensor mask;
  const Mask* mask_grid = nullptr;
};

Tensor mask_tensor(const Mask& m) {
  Tensor t({m.height, m.width});
  auto v = t.mutable_values();
  for (std::size_t i = 0; i < m.size(); ++i) v[i] = m.values[i] != 0 ? 1.0F : 0.0F;
  return t;
}

std::vector<FrameData> usable_frames(const SceneSequence& seq, std::vector<std::string>& warnings) {
  std::vector<FrameData> out;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& f = seq.frames[i];
    if (!f.condition || count(f.condition->mask) < 2) {
      warnings.push_back("frame " + std::to_string(i) +
                         " has fewer than 2 condition points; skipped");
      continue;
    }
    const auto& c = *f.condition;
    out.push_back({i, image_tensor(f.image), Tensor({c.values.height, c.values.width}, c.values.values),
                   mask_tensor(c.mask), &c.mask});
  }
  return out;
}

using ForwardFn = std::function<Tensor(const Tensor& image)>;

/// Shared optimization loop over `frames` with one parameter set.
std::vector<TraceRow> optimize(const std::vector<Tensor>& params, const ForwardFn& fwd,
                               const std::vector<FrameData>& frames, const TtaConfig& cfg) {
  std::vector<TraceRow> trace;
  if (frames.empty()) return trace;
  AdamW opt(params, cfg.adamw);
  Rng rng(cfg.seed);
  const auto batch = static_cast<std::size_t>(
      std::ceil(cfg.batch_fraction * static_cast<double>(frames.size()) - 1e-9));
  const std::size_t k = std::clamp<std::size_t>(batch, 1, frames.size());
  std::vector<std::size_t> all(frames.size());
  std::iota(all.begin(), all.end(), 0);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    auto picked = sample_without_replacement(all, k, rng);
    std::sort(picked.begin(), picked.end());
    auto grads = zeros_like(params);
    const float weight = 1.0F / static_cast<float>(k);
    TraceRow row;
    row.step = step + 1;
    for (std::size_t i : picked) {
      const auto& fr = frames[i];
      Tape tape;
      AffineFit fit;
      Tensor loss;
      try {
        Tensor pred = fwd(fr.image);
        if (cfg.grad_through_align) {
          loss = aligned_l1_through_solve(pred, fr.target, fr.mask, &fit);
        } else {
          fit = solve_affine_l1_or_identity(pred.values(), fr.target.values(),
                                            fr.mask_grid->values);
          loss = ops::l1_loss_masked(align(pred, fit), fr.target, fr.mask);
        }
      } catch (const NumericError& e) {
        throw TrainingDivergenceError("adapt: frame " + std::to_string(fr.index) + ": " + e.what(),
                                      step + 1);
      }
      if (!std::isfinite(loss.item())) {
        throw TrainingDivergenceError("adapt: non-finite loss on frame " + std::to_string(fr.index),
                                      step + 1);
      }
      tape.backward(loss);
      accumulate_gradients(tape, params, grads, weight);
      row.loss += loss.item() / static_cast<double>(k);
      row.s_mean += fit.scale / static_cast<double>(k);
      row.t_mean += fit.shift / static_cast<double>(k);
    }
    row.grad_norm = clip_global_norm(grads, cfg.grad_clip_norm);
    row.lr = cfg.lr_at(step);
    // An exactly zero gradient leaves the parameters (and moments) untouched.
    if (row.grad_norm > 0.0) opt.step(grads, row.lr);
    trace.push_back(row);
  }
  return trace;
}

/// Averages per-frame traces step by step.
std::vector<TraceRow> mean_trace(const std::vector<std::vector<TraceRow>>& traces) {
  std::vector<TraceRow> out;
  if (traces.empty()) return out;
  out.resize(traces.front().size());
  const auto n = static_cast<double>(traces.size());
  for (std::size_t s = 0; s < out.size(); ++s) {
    out[s].step = s + 1;
    for (const auto& t : traces) {
      out[s].loss += t[s].loss / n;
      out[s].grad_norm += t[s].grad_norm / n;
      out[s].lr += t[s].lr / n;
      out[s].s_mean += t[s].s_mean / n;
      out[s].t_mean += t[s].t_mean / n;
    }
  }
  return out;
}

std::vector<DepthMap> aligned_predictions_with(const SceneSequence& seq,
                                               const std::function<DepthMap(std::size_t)>& pred) {
  std::vector<DepthMap> out;
  out.reserve(seq.frames.size());
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    DepthMap d = pred(i);
    const auto& f = seq.frames[i];
    if (f.condition) {
      const auto fit = solve_affine_l1_or_identity(d.values, f.condition->values.values,
                                                   f.condition->mask.values);
      for (float& v : d.values) v = static_cast<float>(fit.scale * v + fit.shift);
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

TtaConfig TtaConfig::defaults_for(AdapterKind kind) {
  TtaConfig c;
  c.lr = kind == AdapterKind::kLora ? 1e-3 : 2e-4;
  return c;
}

void TtaConfig::validate() const {
  if (!(batch_fraction > 0.0 && batch_fraction <= 1.0)) {
    throw ConfigurationError("batch_fraction must be in (0, 1]");
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigurationError("lr must be finite and >= 0");
  if (!(grad_clip_norm > 0.0)) throw ConfigurationError("grad_clip_norm must be positive");
  if (!(final_lr_factor >= 0.0)) throw ConfigurationError("final_lr_factor must be >= 0");
}

double TtaConfig::lr_at(std::size_t step) const {
  if (schedule == LrSchedule::kConstant || steps <= 1) return lr;
  const double progress = static_cast<double>(step) / static_cast<double>(steps - 1);
  return lr * (1.0 - (1.0 - final_lr_factor) * progress);
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << kTraceCsvHeader << '\n' << std::setprecision(9);
  for (const auto& r : trace) {
    os << r.step << ',' << r.loss << ',' << r.grad_norm << ',' << r.lr << ',' << r.s_mean << ','
       << r.t_mean << '\n';
  }
}

const AdapterSet& AdaptResult::for_frame(std::size_t frame) const {
  return adapters.size() == 1 ? adapters.front() : adapters.at(frame);
}

const ModelWeights& FinetuneResult::for_frame(std::size_t frame) const {
  return weights.size() == 1 ? weights.front() : weights.at(frame);
}

AdaptResult adapt(const ModelWeights& weights, const AdapterSet& initial, const SceneSequence& seq,
                  const TtaConfig& config) {
  config.validate();
  if (count_parameters(initial) == 0) {
    throw ConfigurationError("adapt: the adapter set has no trainable parameters");
  }
  AdaptResult result;
  const auto frames = usable_frames(seq, result.warnings);

  if (config.sharing == Sharing::kPerSequence) {
    AdapterSet theta = initial.clone();
    const ForwardFn fwd = [&](const Tensor& img) { return forward(weights, &theta, img); };
    result.trace = optimize(theta.parameters(), fwd, frames, config);
    result.adapters.push_back(std::move(theta));
    return result;
  }

  result.adapters.reserve(seq.frames.size());
  for (std::size_t i = 0; i < seq.frames.size(); ++i) result.adapters.push_back(initial.clone());
  std::vector<std::vector<TraceRow>> traces;
  for (const auto& fr : frames) {
    AdapterSet& theta = result.adapters[fr.index];
    const ForwardFn fwd = [&](const Tensor& img) { return forward(weights, &theta, img); };
    traces.push_back(optimize(theta.parameters(), fwd, {fr}, config));
  }
  result.trace = mean_trace(traces);
  return result;
}

std::size_t scope_parameter_count(const ModelWeights& weights, FinetuneScope scope) {
  std::vector<Tensor> params;
  switch (scope) {
    case FinetuneScope::kAll:
      params = weights.parameters();
      break;
    case FinetuneScope::kEncoder:
      params = weights.encoder_parameters();
      break;
    case FinetuneScope::kHead:
      params = weights.head_parameters();
      break;
  }
  std::size_t n = 0;
  for (const auto& t : params) n += t.numel();
  return n;
}

FinetuneResult finetune_baseline(const ModelWeights& weights, const SceneSequence& seq,
                                 const TtaConfig& config, FinetuneScope scope) {
  config.validate();
  FinetuneResult result;
  result.trainable_parameters = scope_parameter_count(weights, scope);
  result.parameter_percent = 100.0 * static_cast<double>(result.trainable_parameters) /
                             static_cast<double>(count_parameters(weights));
  const auto frames = usable_frames(seq, result.warnings);

  auto run = [&](const std::vector<FrameData>& subset) {
    ModelWeights w = weights.clone();
    std::vector<Tensor> params;
    switch (scope) {
      case FinetuneScope::kAll:
        params = w.parameters();
        break;
      case FinetuneScope::kEncoder:
        params = w.encoder_parameters();
        break;
      case FinetuneScope::kHead:
        params = w.head_parameters();
        break;
    }
    for (auto& p : params) p.set_requires_grad(true);
    const ForwardFn fwd = [&](const Tensor& img) { return forward(w, nullptr, img); };
    auto trace = optimize(params, fwd, subset, config);
    w.set_requires_grad(false);
    return std::make_pair(std::move(w), std::move(trace));
  };

  if (config.sharing == Sharing::kPerSequence) {
    auto [w, trace] = run(frames);
    result.weights.push_back(std::move(w));
    result.trace = std::move(trace);
    return result;
  }
  result.weights.assign(seq.frames.size(), weights);
  std::vector<std::vector<TraceRow>> traces;
  for (const auto& fr : frames) {
    auto [w, trace] = run({fr});
    result.weights[fr.index] = std::move(w);
    traces.push_back(std::move(trace));
  }
  result.trace = mean_trace(traces);
  return result;
}

std::vector<DepthMap> aligned_predictions(const ModelWeights& weights, const AdaptResult* adapted,
                                          const SceneSequence& seq) {
  return aligned_predictions_with(seq, [&](std::size_t i) {
    return predict(weights, adapted != nullptr ? &adapted->for_frame(i) : nullptr,
                   seq.frames[i].image);
  });
}

std::vector<DepthMap> aligned_predictions(const FinetuneResult& tuned, const SceneSequence& seq) {
  return aligned_predictions_with(seq, [&](std::size_t i) {
    return predict(tuned.for_frame(i), nullptr, seq.frames[i].image);
  });
}

}  // namespace capa
