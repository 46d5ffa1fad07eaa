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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include "capa/checkpoint.hpp"
#include "capa/model.hpp"
#include "capa/tensor.hpp"

namespace capa {

enum class AdapterKind : std::uint8_t { kLora, kVpt };
enum class LayerSelection : std::uint8_t { kAll, kShallowHalf, kDeepHalf };
enum class Projection : std::uint8_t { kQuery = 0, kKey = 1, kValue = 2 };

/// Low-rank update W' = W + (alpha / rank)·B·A for q, k and v of one layer.
struct LoraAdapter {
  std::array<Tensor, 3> a;  // rank × d_k
  std::array<Tensor, 3> b;  // d_c × rank
};

/// Prompt tokens prepended to one layer's input sequence.
struct VptAdapter {
  Tensor prompts;  // n_prompt × d_c
};

struct AdapterOptions {
  AdapterKind kind = AdapterKind::kLora;
  LayerSelection selection = LayerSelection::kAll;
  std::size_t rank = 4;
  double alpha = 0.0;  // 0 selects the default 2·rank
  std::size_t n_prompt = 16;
};

enum class AdapterInit : std::uint8_t { kLoraDefault, kVptXavier, kVptPretuned };

/// Trainable parameter set for one adaptation run. Every tensor it holds
/// requires gradient.
class AdapterSet {
 public:
  AdapterKind kind = AdapterKind::kLora;
  LayerSelection selection = LayerSelection::kAll;
  std::size_t rank = 0;
  double alpha = 0.0;
  std::size_t n_prompt = 0;
  std::map<std::size_t, LoraAdapter> lora;
  std::map<std::size_t, VptAdapter> vpt;

  /// Deterministic order: ascending layer, then q/k/v, A before B.
  std::vector<Tensor> parameters() const;
  NamedTensors named() const;
  static AdapterSet from_named(const NamedTensors& tensors);
  AdapterSet clone() const;
  bool covers(std::size_t layer) const;
};

std::vector<std::size_t> selected_layers(LayerSelection selection, std::size_t n_layers);

/// lora-default: A ~ U(-1/sqrt(d_k), 1/sqrt(d_k)), B = 0.
/// vpt-xavier: U(-b, b) with b = sqrt(6 / (n_prompt + d_c)).
/// vpt-pretuned: prompts loaded from `pretuned` (must match layers/n_prompt).
AdapterSet init_adapters(const AdapterOptions& options, const ModelConfig& config,
                         AdapterInit init, std::uint64_t seed,
                         const std::filesystem::path& pretuned = {});

/// Effective projection for `layer`; passthrough when the layer carries no
/// LoRA adapter.
Tensor apply_lora(const Tensor& w, const AdapterSet& adapters, std::size_t layer, Projection m);

/// [P; X] and the first image-token row. Passthrough (X, 0) when the layer
/// carries no prompts.
std::pair<Tensor, std::size_t> apply_vpt(const Tensor& x, const AdapterSet& adapters,
                                         std::size_t layer);

std::size_t count_parameters(const AdapterSet& adapters);

}  // namespace capa
