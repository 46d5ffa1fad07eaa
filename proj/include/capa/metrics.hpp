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
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "capa/grid.hpp"
#include "capa/scenes.hpp"

namespace capa {

double absrel(const DepthMap& pred, const DepthMap& gt, const Mask& valid);
double mae(const DepthMap& pred, const DepthMap& gt, const Mask& valid);
double rmse(const DepthMap& pred, const DepthMap& gt, const Mask& valid);

/// AbsRel over masked pixels and over valid-but-unmasked pixels. A side with
/// no pixels is reported as nullopt.
struct ConditionSplit {
  std::optional<double> in_condition;
  std::optional<double> out_condition;
};
ConditionSplit condition_split(const DepthMap& pred, const DepthMap& gt, const Mask& valid,
                               const Mask& condition_mask);

/// Temporal warping error (×100) between consecutive frames, using
/// ground-truth correspondences and motion compensation of each prediction.
/// The target-pixel lookup is rescaled by the ground truth's own sub-pixel
/// depth ratio, so exact ground-truth predictions score 0.
double opw(const std::vector<DepthMap>& preds, const SceneSequence& seq);

struct EvalReport {
  double absrel = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  double opw = 0.0;
  double absrel_in_condition = 0.0;
  double absrel_out_condition = 0.0;
  double condition_gap = 0.0;
  std::size_t frames = 0;
  std::size_t valid_pixels = 0;
  std::size_t condition_pixels = 0;
};

/// Per-frame metrics averaged over the sequence. Frames must carry a
/// condition for the in/out split; OPW is skipped (0) for one-frame inputs.
EvalReport evaluate_sequence(const std::vector<DepthMap>& preds, const SceneSequence& seq);

inline constexpr const char* kEvalCsvHeader =
    "absrel,mae,rmse,opw,absrel_in,absrel_out,condition_gap,frames,valid_pixels,condition_pixels";
std::string to_csv_row(const EvalReport& report);
void write_eval_csv(std::ostream& os, const EvalReport& report);
void write_eval_table(std::ostream& os, const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace capa
