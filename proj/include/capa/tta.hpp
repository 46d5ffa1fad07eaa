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
#include <ostream>
#include <string>
#include <vector>

#include "capa/align.hpp"
#include "capa/grid.hpp"
#include "capa/metrics.hpp"
#include "capa/model.hpp"
#include "capa/optim.hpp"
#include "capa/peft.hpp"
#include "capa/scenes.hpp"

namespace capa {

enum class Sharing : std::uint8_t { kPerFrame, kPerSequence };
enum class LrSchedule : std::uint8_t { kConstant, kLinearDecay };

struct TtaConfig {
  std::size_t steps = 100;
  double lr = 1e-3;
  double batch_fraction = 0.10;
  Sharing sharing = Sharing::kPerSequence;
  AdamWConfig adamw;
  double grad_clip_norm = 1.0;
  LrSchedule schedule = LrSchedule::kConstant;
  double final_lr_factor = 0.33;
  std::uint64_t seed = 0;
  /// Differentiate through the affine solve instead of holding (s, t) fixed.
  bool grad_through_align = false;

  /// Defaults with the adapter-specific learning rate (1e-3 LoRA, 2e-4 VPT).
  static TtaConfig defaults_for(AdapterKind kind);
  /// Throws ConfigurationError on out-of-range fields.
  void validate() const;
  double lr_at(std::size_t step) const;
};

/// One optimizer step. For per-frame runs each field is the mean over frames.
struct TraceRow {
  std::size_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
  double lr = 0.0;
  double s_mean = 0.0;
  double t_mean = 0.0;
};

inline constexpr const char* kTraceCsvHeader = "step,loss,grad_norm,lr,s_mean,t_mean";
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);

struct AdaptResult {
  /// One entry for per-sequence runs, one per frame for per-frame runs.
  std::vector<AdapterSet> adapters;
  std::vector<TraceRow> trace;
  std::vector<std::string> warnings;

  const AdapterSet& for_frame(std::size_t frame) const;
};

/// Optimizes a copy of `initial` on the sparse conditions of `seq`; the base
/// weights are never written. Frames with fewer than two condition points are
/// skipped with a warning.
AdaptResult adapt(const ModelWeights& weights, const AdapterSet& initial, const SceneSequence& seq,
                  const TtaConfig& config);

enum class FinetuneScope : std::uint8_t { kAll, kEncoder, kHead };

struct FinetuneResult {
  /// One entry for per-sequence runs, one per frame for per-frame runs.
  std::vector<ModelWeights> weights;
  std::vector<TraceRow> trace;
  std::vector<std::string> warnings;
  std::size_t trainable_parameters = 0;
  double parameter_percent = 0.0;

  const ModelWeights& for_frame(std::size_t frame) const;
};

/// Same loop as adapt(), but unfreezes a subset of a copy of the base weights.
FinetuneResult finetune_baseline(const ModelWeights& weights, const SceneSequence& seq,
                                 const TtaConfig& config, FinetuneScope scope);

std::size_t scope_parameter_count(const ModelWeights& weights, FinetuneScope scope);

/// Prediction for every frame, affinely aligned to that frame's condition
/// (identity fit when the condition cannot determine one).
std::vector<DepthMap> aligned_predictions(const ModelWeights& weights, const AdaptResult* adapted,
                                          const SceneSequence& seq);
std::vector<DepthMap> aligned_predictions(const FinetuneResult& tuned, const SceneSequence& seq);

}  // namespace capa
