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
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "capa/checkpoint.hpp"
#include "capa/grid.hpp"
#include "capa/scenes.hpp"
#include "capa/tensor.hpp"

namespace capa {

class AdapterSet;

struct ModelConfig {
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t channels = 64;    // d_c
  std::size_t projection = 64;  // d_k, single head
  std::size_t layers = 4;
  std::size_t mlp_hidden = 256;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t tokens() const { return grid() * grid(); }
  std::size_t patch_pixels() const { return patch_size * patch_size; }
  /// Throws ConfigurationError if the image does not tile into patches.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerWeights {
  Tensor ln1_gain, ln1_bias;
  Tensor w_q, w_k, w_v;  // d_c × d_k
  Tensor w_o, b_o;       // d_k × d_c
  Tensor ln2_gain, ln2_bias;
  Tensor w_mlp1, b_mlp1, w_mlp2, b_mlp2;
};

/// Pre-norm ViT: patch embedding + learned positions, `layers` attention/MLP
/// blocks, final norm and a per-token linear head producing one patch of
/// depth values, made positive by softplus.
struct ModelWeights {
  ModelConfig config;
  Tensor patch_embed, patch_bias, position;
  std::vector<LayerWeights> layers;
  Tensor ln_f_gain, ln_f_bias;
  Tensor head, head_bias;

  static ModelWeights initialize(const ModelConfig& config, std::uint64_t seed);

  /// Checkpoint names, all prefixed "model.".
  NamedTensors named() const;
  static ModelWeights from_named(const NamedTensors& tensors);

  std::vector<Tensor> parameters() const;
  /// Encoder = embedding, positions and attention blocks; head = final norm
  /// and the depth head.
  std::vector<Tensor> encoder_parameters() const;
  std::vector<Tensor> head_parameters() const;

  ModelWeights clone() const;
  void set_requires_grad(bool flag);
};

/// H×W tensor without gradient.
Tensor image_tensor(const Image& image);
DepthMap to_depth_map(const Tensor& t);

/// Raw (affine-ambiguous) depth for one image. With adapters, every covered
/// attention layer applies them. Records on the active tape, if any.
Tensor forward(const ModelWeights& weights, const AdapterSet* adapters, const Tensor& image);

/// Tape-free convenience wrapper.
DepthMap predict(const ModelWeights& weights, const AdapterSet* adapters, const Image& image);

std::size_t count_parameters(const ModelWeights& weights);

struct PretrainOptions {
  std::size_t epochs = 40;
  double lr = 1e-3;
  double final_lr_factor = 0.1;  // linear decay over all steps
  std::size_t batch_size = 8;
  double weight_decay = 0.0;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
  /// Called after each epoch with (epoch index, mean loss).
  std::function<void(std::size_t, double)> on_epoch;
};

/// Fits weights to the frames of `scenes` under a per-image affine-invariant
/// L1 objective (prediction aligned to dense GT, then L1 normalized by the
/// image's median GT depth). Deterministic for a fixed seed.
ModelWeights pretrain(const ModelConfig& config, const std::vector<SceneSequence>& scenes,
                      const PretrainOptions& options);

/// Affine-aligned L1 loss of one frame against its dense GT (the pretraining
/// objective), evaluated without a tape.
double aligned_dense_loss(const ModelWeights& weights, const DepthFrame& frame);

}  // namespace capa
