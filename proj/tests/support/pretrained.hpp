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

// The base model every slow test and the acceptance runner share: default
// configuration pretrained on the default seed-0 training corpus. The fixture
// executable writes it once per ctest run; consumers fall back to training
// it themselves when run on their own.

#include <filesystem>
#include <iostream>

#include "capa/checkpoint.hpp"
#include "capa/error.hpp"
#include "capa/model.hpp"

namespace capa::testing {

inline ModelWeights pretrain_default(bool verbose) {
  const auto train = generate_corpus(kTrainSeedBase, kTrainScenes, kTrainFrames);
  PretrainOptions options;
  if (verbose) {
    options.on_epoch = [](std::size_t epoch, double loss) {
      std::cout << "pretrain epoch " << epoch + 1 << " loss " << loss << std::endl;
    };
  }
  return pretrain(ModelConfig{}, train, options);
}

inline ModelWeights ensure_pretrained(const std::filesystem::path& path, bool verbose = false) {
  if (std::filesystem::exists(path)) {
    try {
      return ModelWeights::from_named(load_checkpoint(path));
    } catch (const LoadError& e) {
      std::cerr << "ignoring unreadable checkpoint " << path << ": " << e.what() << '\n';
    }
  }
  auto weights = pretrain_default(verbose);
  std::filesystem::create_directories(path.parent_path());
  save_checkpoint(path, weights.named());
  return weights;
}

}  // namespace capa::testing
