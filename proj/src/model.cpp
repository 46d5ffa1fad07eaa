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

#include "capa/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

#include "capa/align.hpp"
#include "capa/error.hpp"
#include "capa/ops.hpp"
#include "capa/optim.hpp"
#include "capa/peft.hpp"
#include "capa/random.hpp"

namespace capa {
namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng, double gain = 1.0) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (float& v : t.mutable_values()) v = static_cast<float>(uniform(rng, -bound, bound));
  return t;
}

Tensor filled(std::size_t n, float value) {
  return Tensor({n}, std::vector<float>(n, value));
}

/// patch_index[t·p² + py·p + px] = flat pixel of token t at offset (py, px).
std::vector<std::size_t> patch_index(const ModelConfig& c) {
  const std::size_t p = c.patch_size;
  const std::size_t g = c.grid();
  std::vector<std::size_t> idx(c.tokens() * c.patch_pixels());
  for (std::size_t gy = 0; gy < g; ++gy) {
    for (std::size_t gx = 0; gx < g; ++gx) {
      const std::size_t t = gy * g + gx;
      for (std::size_t py = 0; py < p; ++py) {
        for (std::size_t px = 0; px < p; ++px) {
          idx[t * p * p + py * p + px] = (gy * p + py) * c.image_size + gx * p + px;
        }
      }
    }
  }
  return idx;
}

std::vector<std::size_t> unpatch_index(const ModelConfig& c) {
  const auto fwd = patch_index(c);
  std::vector<std::size_t> inv(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = i;
  return inv;
}

const char* const kLayerNames[] = {"ln1.gain", "ln1.bias", "w_q",    "w_k",    "w_v",
                                   "w_o",      "b_o",      "ln2.gain", "ln2.bias", "mlp1.w",
                                   "mlp1.b",   "mlp2.w",   "mlp2.b"};

std::vector<Tensor*> layer_slots(LayerWeights& l) {
  return {&l.ln1_gain, &l.ln1_bias, &l.w_q,    &l.w_k,    &l.w_v,    &l.w_o,   &l.b_o,
          &l.ln2_gain, &l.ln2_bias, &l.w_mlp1, &l.b_mlp1, &l.w_mlp2, &l.b_mlp2};
}

std::vector<const Tensor*> layer_slots(const LayerWeights& l) {
  return {&l.ln1_gain, &l.ln1_bias, &l.w_q,    &l.w_k,    &l.w_v,    &l.w_o,   &l.b_o,
          &l.ln2_gain, &l.ln2_bias, &l.w_mlp1, &l.b_mlp1, &l.w_mlp2, &l.b_mlp2};
}

Tensor mask_tensor(const Mask& m) {
  Tensor t({m.height, m.width});
  auto v = t.mutable_values();
  for (std::size_t i = 0; i < m.size(); ++i) v[i] = m.values[i] != 0 ? 1.0F : 0.0F;
  return t;
}

Tensor depth_tensor(const DepthMap& d) { return Tensor({d.height, d.width}, d.values); }

double median_valid(const DepthMap& depth, const Mask& valid) {
  std::vector<float> v;
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (valid.values[i] != 0) v.push_back(depth.values[i]);
  }
  if (v.empty()) return 1.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

void check_adapters(const ModelConfig& config, const AdapterSet& adapters) {
  auto check = [&](std::size_t layer) {
    if (layer >= config.layers) {
      throw ConfigurationError("adapter targets layer " + std::to_string(layer) +
                               " but the model has " + std::to_string(config.layers));
    }
  };
  for (const auto& [l, a] : adapters.lora) check(l);
  for (const auto& [l, p] : adapters.vpt) check(l);
}

}  // namespace

void ModelConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw ConfigurationError("image_size " + std::to_string(image_size) +
                             " is not divisible by patch_size " + std::to_string(patch_size));
  }
  if (channels == 0 || projection == 0 || layers == 0 || mlp_hidden == 0) {
    throw ConfigurationError("model dimensions must be positive");
  }
}

ModelWeights ModelWeights::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t d = config.channels;
  const std::size_t k = config.projection;
  const std::size_t pp = config.patch_pixels();
  // Residual branches start small so the initial network is close to the
  // embedding + head path.
  const double residual_gain = 1.0 / std::sqrt(2.0 * static_cast<double>(config.layers));

  ModelWeights w;
  w.config = config;
  w.patch_embed = xavier(pp, d, rng);
  w.patch_bias = filled(d, 0.0F);
  w.position = Tensor({config.tokens(), d});
  for (float& v : w.position.mutable_values()) v = static_cast<float>(uniform(rng, -0.02, 0.02));
  for (std::size_t l = 0; l < config.layers; ++l) {
    LayerWeights lw;
    lw.ln1_gain = filled(d, 1.0F);
    lw.ln1_bias = filled(d, 0.0F);
    lw.w_q = xavier(d, k, rng);
    lw.w_k = xavier(d, k, rng);
    lw.w_v = xavier(d, k, rng);
    lw.w_o = xavier(k, d, rng, residual_gain);
    lw.b_o = filled(d, 0.0F);
    lw.ln2_gain = filled(d, 1.0F);
    lw.ln2_bias = filled(d, 0.0F);
    lw.w_mlp1 = xavier(d, config.mlp_hidden, rng);
    lw.b_mlp1 = filled(config.mlp_hidden, 0.0F);
    lw.w_mlp2 = xavier(config.mlp_hidden, d, rng, residual_gain);
    lw.b_mlp2 = filled(d, 0.0F);
    w.layers.push_back(std::move(lw));
  }
  w.ln_f_gain = filled(d, 1.0F);
  w.ln_f_bias = filled(d, 0.0F);
  w.head = xavier(d, pp, rng);
  // softplus(b) = 1 at the start.
  w.head_bias = filled(pp, static_cast<float>(std::log(std::expm1(1.0))));
  return w;
}

NamedTensors ModelWeights::named() const {
  NamedTensors out;
  out.emplace_back("model.patch_embed", patch_embed);
  out.emplace_back("model.patch_bias", patch_bias);
  out.emplace_back("model.position", position);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto slots = layer_slots(layers[l]);
    for (std::size_t s = 0; s < slots.size(); ++s) {
      out.emplace_back("model.layers." + std::to_string(l) + "." + kLayerNames[s], *slots[s]);
    }
  }
  out.emplace_back("model.ln_f.gain", ln_f_gain);
  out.emplace_back("model.ln_f.bias", ln_f_bias);
  out.emplace_back("model.head", head);
  out.emplace_back("model.head_bias", head_bias);
  return out;
}

ModelWeights ModelWeights::from_named(const NamedTensors& tensors) {
  auto get = [&](const std::string& name) { return find_tensor(tensors, name).clone(); };
  ModelWeights w;
  w.patch_embed = get("model.patch_embed");
  w.position = get("model.position");
  if (w.patch_embed.rank() != 2 || w.position.rank() != 2) {
    throw LoadError("checkpoint: model.patch_embed and model.position must be 2-D");
  }
  ModelConfig c;
  c.patch_size = static_cast<std::size_t>(std::lround(std::sqrt(w.patch_embed.rows())));
  const auto grid = static_cast<std::size_t>(std::lround(std::sqrt(w.position.rows())));
  c.image_size = grid * c.patch_size;
  c.channels = w.patch_embed.cols();
  std::size_t n_layers = 0;
  while (true) {
    const std::string prefix = "model.layers." + std::to_string(n_layers) + ".";
    const bool present = std::any_of(tensors.begin(), tensors.end(), [&](const auto& nt) {
      return nt.first.rfind(prefix, 0) == 0;
    });
    if (!present) break;
    LayerWeights lw;
    const auto slots = layer_slots(lw);
    for (std::size_t s = 0; s < slots.size(); ++s) *slots[s] = get(prefix + kLayerNames[s]);
    w.layers.push_back(std::move(lw));
    ++n_layers;
  }
  if (n_layers == 0) throw LoadError("checkpoint: model has no layers");
  c.layers = n_layers;
  c.projection = w.layers[0].w_q.cols();
  c.mlp_hidden = w.layers[0].w_mlp1.cols();
  w.patch_bias = get("model.patch_bias");
  w.ln_f_gain = get("model.ln_f.gain");
  w.ln_f_bias = get("model.ln_f.bias");
  w.head = get("model.head");
  w.head_bias = get("model.head_bias");
  if (c.patch_size * c.patch_size != w.patch_embed.rows() || grid * grid != w.position.rows()) {
    throw LoadError("checkpoint: patch or position table is not square");
  }
  w.config = c;
  // Shape check by running the initializer's layout against the loaded one.
  const auto ref = initialize(c, 0).named();
  const auto got = w.named();
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i].second.shape() != got[i].second.shape()) {
      throw LoadError("checkpoint: tensor '" + ref[i].first + "' has an unexpected shape");
    }
  }
  return w;
}

std::vector<Tensor> ModelWeights::parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::vector<Tensor> ModelWeights::encoder_parameters() const {
  std::vector<Tensor> out{patch_embed, patch_bias, position};
  for (const auto& l : layers) {
    for (const Tensor* t : layer_slots(l)) out.push_back(*t);
  }
  return out;
}

std::vector<Tensor> ModelWeights::head_parameters() const {
  return {ln_f_gain, ln_f_bias, head, head_bias};
}

ModelWeights ModelWeights::clone() const {
  ModelWeights w = *this;
  w.patch_embed = patch_embed.clone();
  w.patch_bias = patch_bias.clone();
  w.position = position.clone();
  for (auto& l : w.layers) {
    for (Tensor* t : layer_slots(l)) *t = t->clone();
  }
  w.ln_f_gain = ln_f_gain.clone();
  w.ln_f_bias = ln_f_bias.clone();
  w.head = head.clone();
  w.head_bias = head_bias.clone();
  return w;
}

void ModelWeights::set_requires_grad(bool flag) {
  for (auto& t : parameters()) t.set_requires_grad(flag);
}

Tensor image_tensor(const Image& image) {
  return Tensor({image.height, image.width}, image.values);
}

DepthMap to_depth_map(const Tensor& t) {
  if (t.rank() != 2) throw DimensionError("to_depth_map: expected a 2-D tensor");
  DepthMap d(t.shape()[0], t.shape()[1]);
  std::copy(t.values().begin(), t.values().end(), d.values.begin());
  return d;
}

Tensor forward(const ModelWeights& weights, const AdapterSet* adapters, const Tensor& image) {
  const auto& c = weights.config;
  c.validate();
  if (image.shape() != Shape{c.image_size, c.image_size}) {
    throw DimensionError("forward: image must be " + std::to_string(c.image_size) + "×" +
                         std::to_string(c.image_size));
  }
  if (weights.layers.size() != c.layers) {
    throw ConfigurationError("forward: weights hold " + std::to_string(weights.layers.size()) +
                             " layers, config says " + std::to_string(c.layers));
  }
  if (adapters != nullptr) check_adapters(c, *adapters);
  const std::size_t n_tokens = c.tokens();

  Tensor x = ops::gather(image, {n_tokens, c.patch_pixels()}, patch_index(c));
  x = ops::add(ops::add_row_bias(ops::matmul(x, weights.patch_embed), weights.patch_bias),
               weights.position);

  for (std::size_t l = 0; l < c.layers; ++l) {
    const auto& lw = weights.layers[l];
    // Prompts join the block input, so they share the first norm with the
    // image tokens.
    Tensor xn = x;
    std::size_t keep_from = 0;
    if (adapters != nullptr) std::tie(xn, keep_from) = apply_vpt(x, *adapters, l);
    Tensor h = ops::layernorm_rows(xn, lw.ln1_gain, lw.ln1_bias);
    Tensor wq = lw.w_q;
    Tensor wk = lw.w_k;
    Tensor wv = lw.w_v;
    if (adapters != nullptr) {
      wq = apply_lora(wq, *adapters, l, Projection::kQuery);
      wk = apply_lora(wk, *adapters, l, Projection::kKey);
      wv = apply_lora(wv, *adapters, l, Projection::kValue);
    }
    Tensor attn = ops::scaled_dot_attention(h, h, wq, wk, wv);
    if (keep_from > 0) attn = ops::slice_rows(attn, keep_from, keep_from + n_tokens);
    x = ops::add(x, ops::add_row_bias(ops::matmul(attn, lw.w_o), lw.b_o));

    Tensor h2 = ops::layernorm_rows(x, lw.ln2_gain, lw.ln2_bias);
    Tensor hidden = ops::gelu(ops::add_row_bias(ops::matmul(h2, lw.w_mlp1), lw.b_mlp1));
    x = ops::add(x, ops::add_row_bias(ops::matmul(hidden, lw.w_mlp2), lw.b_mlp2));
  }

  Tensor y = ops::layernorm_rows(x, weights.ln_f_gain, weights.ln_f_bias);
  y = ops::add_row_bias(ops::matmul(y, weights.head), weights.head_bias);
  y = ops::gather(y, {c.image_size, c.image_size}, unpatch_index(c));
  return ops::softplus(y);
}

DepthMap predict(const ModelWeights& weights, const AdapterSet* adapters, const Image& image) {
  return to_depth_map(forward(weights, adapters, image_tensor(image)));
}

std::size_t count_parameters(const ModelWeights& weights) {
  std::size_t n = 0;
  for (const auto& t : weights.parameters()) n += t.numel();
  return n;
}

double aligned_dense_loss(const ModelWeights& weights, const DepthFrame& frame) {
  const auto pred = predict(weights, nullptr, frame.image);
  const auto fit = solve_affine_l1_or_identity(pred.values, frame.depth.values, frame.valid.values);
  const auto n = count(frame.valid);
  if (n == 0) return 0.0;
  const double l1 = affine_l1_objective(pred.values, frame.depth.values, frame.valid.values,
                                        fit.scale, fit.shift);
  return l1 / static_cast<double>(n) / median_valid(frame.depth, frame.valid);
}

ModelWeights pretrain(const ModelConfig& config, const std::vector<SceneSequence>& scenes,
                      const PretrainOptions& options) {
  if (scenes.empty()) throw ConfigurationError("pretrain: no training scenes");
  if (options.epochs == 0) throw ConfigurationError("pretrain: epochs must be at least 1");
  if (options.batch_size == 0) throw ConfigurationError("pretrain: batch_size must be positive");

  struct Item {
    const DepthFrame* frame;
    Tensor image, depth, mask;
    double norm;
  };
  std::vector<Item> items;
  for (const auto& seq : scenes) {
    for (const auto& f : seq.frames) {
      if (count(f.valid) < 2) continue;
      items.push_back({&f, image_tensor(f.image), depth_tensor(f.depth), mask_tensor(f.valid),
                       1.0 / median_valid(f.depth, f.valid)});
    }
  }
  if (items.empty()) throw ConfigurationError("pretrain: no frame has valid depth");

  ModelWeights w = ModelWeights::initialize(config, options.seed);
  w.set_requires_grad(true);
  const auto params = w.parameters();
  AdamW opt(params, AdamWConfig{0.9, 0.999, 1e-8, options.weight_decay});
  Rng rng(options.seed ^ 0x5DEECE66DULL);

  const std::size_t batches_per_epoch = (items.size() + options.batch_size - 1) / options.batch_size;
  const std::size_t total_steps = batches_per_epoch * options.epochs;
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    order = sample_without_replacement(order, order.size(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t from = b * options.batch_size;
      const std::size_t to = std::min(items.size(), from + options.batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(from),
                                     order.begin() + static_cast<std::ptrdiff_t>(to));
      std::sort(batch.begin(), batch.end());
      auto grads = zeros_like(params);
      double batch_loss = 0.0;
      const float weight = 1.0F / static_cast<float>(batch.size());
      for (std::size_t i : batch) {
        const auto& item = items[i];
        Tape tape;
        Tensor loss;
        try {
          Tensor pred = forward(w, nullptr, item.image);
          const auto fit = solve_affine_l1_or_identity(pred.values(), item.depth.values(),
                                                       item.frame->valid.values);
          loss = ops::scale(ops::l1_loss_masked(align(pred, fit), item.depth, item.mask),
                            static_cast<float>(item.norm));
        } catch (const NumericError& e) {
          throw TrainingDivergenceError(std::string("pretrain: ") + e.what(), step);
        }
        if (!std::isfinite(loss.item())) {
          throw TrainingDivergenceError("pretrain: non-finite loss", step);
        }
        batch_loss += loss.item();
        tape.backward(loss);
        accumulate_gradients(tape, params, grads, weight);
      }
      clip_global_norm(grads, options.grad_clip_norm);
      const double progress =
          total_steps > 1 ? static_cast<double>(step) / static_cast<double>(total_steps - 1) : 0.0;
      const double lr = options.lr * (1.0 - (1.0 - options.final_lr_factor) * progress);
      opt.step(grads, lr);
      epoch_loss += batch_loss;
      ++step;
    }
    if (options.on_epoch) options.on_epoch(epoch, epoch_loss / static_cast<double>(items.size()));
  }
  w.set_requires_grad(false);
  return w;
}

}  // namespace capa
