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
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "capa/conditioning.hpp"
#include "capa/model.hpp"
#include "capa/peft.hpp"
#include "capa/scenes.hpp"
#include "capa/tta.hpp"

namespace capa {

struct AdapterRunOptions {
  AdapterOptions adapter;
  AdapterInit init = AdapterInit::kLoraDefault;
  std::filesystem::path pretuned;
  /// 0 picks the adapter-specific default learning rate.
  double lr = 0.0;
};

struct ScenesOptions {
  std::uint64_t seed = 0;
  std::size_t train = kTrainScenes;
  std::size_t test = kTestScenes;
  std::size_t train_frames = kTrainFrames;
  std::size_t test_frames = kTestFrames;
  /// Applied to the held-out scenes only. fog:BETA, gamma:G, texture or none.
  std::string test_shift = "fog:0.3";
};

struct BenchOptions {
  std::vector<std::string> patterns{"random:100"};
  std::vector<std::string> peft{"lora"};
  std::vector<std::string> sharing{"sequence"};
  std::vector<std::size_t> steps{100};
  std::vector<double> batch_fraction{0.1};
  /// Limit on the number of scenes evaluated per cell (0 = all).
  std::size_t max_scenes = 0;
};

/// Parsed run configuration. Sections: [model], [pretrain], [tta],
/// [condition], [scenes], [bench]. Every key is optional.
struct RunConfig {
  ModelConfig model;
  PretrainOptions pretrain;
  AdapterRunOptions adapter;
  TtaConfig tta;
  ConditionSpec condition;
  ScenesOptions scenes;
  BenchOptions bench;

  /// TtaConfig with the learning rate resolved for the configured adapter.
  TtaConfig tta_for(AdapterKind kind) const;
};

/// Throws ConfigurationError naming the line for unknown sections/keys and
/// malformed values.
RunConfig parse_run_config(std::istream& is);
RunConfig load_run_config(const std::filesystem::path& path);

/// Documented key list, one "section.key = default  # meaning" per line.
std::string describe_run_config();

DomainShift parse_shift(const std::string& text);
AdapterKind parse_adapter_kind(const std::string& text);
Sharing parse_sharing(const std::string& text);
LayerSelection parse_layer_selection(const std::string& text);

}  // namespace capa
