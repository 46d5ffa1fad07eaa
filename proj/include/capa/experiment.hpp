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
#include <filesystem>
#include <string>
#include <vector>

#include "capa/config.hpp"
#include "capa/metrics.hpp"
#include "capa/model.hpp"
#include "capa/scenes.hpp"
#include "capa/tta.hpp"

namespace capa {

/// One point of the benchmark grid.
struct CellSpec {
  std::string pattern = "random:100";
  AdapterKind peft = AdapterKind::kLora;
  Sharing sharing = Sharing::kPerSequence;
  std::size_t steps = 100;
  double batch_fraction = 0.1;
};

struct CellResult {
  CellSpec cell;
  EvalReport base;     // affine-aligned base model, averaged over scenes
  EvalReport adapted;  // after adaptation, averaged over scenes
  std::vector<TraceRow> trace;  // mean over scenes
  double seconds = 0.0;
};

/// Field-wise mean of per-scene reports (counts are summed).
EvalReport mean_report(const std::vector<EvalReport>& reports);

/// Copies of `scenes` with conditions from `pattern` and the configured noise
/// and seed attached to every frame.
std::vector<SceneSequence> with_conditions(const std::vector<SceneSequence>& scenes,
                                           const std::string& pattern, const RunConfig& config);

/// Conditions each scene, evaluates the aligned base model, adapts with the
/// cell's settings and evaluates again.
CellResult run_cell(const ModelWeights& weights, const std::vector<SceneSequence>& scenes,
                    const CellSpec& cell, const RunConfig& config);

/// Cross product pattern × peft × sharing × steps × batch_fraction.
std::vector<CellSpec> bench_grid(const BenchOptions& options);

inline constexpr const char* kBenchCsvHeader =
    "pattern,peft,sharing,steps,batch_fraction,absrel,mae,rmse,opw,absrel_in,absrel_out,"
    "condition_gap,base_absrel,base_opw,base_condition_gap,seconds";

/// bench.csv (one row per cell) and table_<axis>.txt for each grid axis.
void write_bench_outputs(const std::filesystem::path& dir, const std::vector<CellResult>& results);

/// Held-out corpus with the configured domain shift applied.
std::vector<SceneSequence> make_test_corpus(const ScenesOptions& options);

}  // namespace capa
