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

// Pretrains the shared base model and writes it to the path given as the
// first argument (always retrains, so the checkpoint tracks the sources).

#include <filesystem>
#include <iostream>

#include "capa/checkpoint.hpp"
#include "support/pretrained.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: pretrain_fixture OUT.capa\n";
    return 1;
  }
  const std::filesystem::path out = argv[1];
  const auto weights = capa::testing::pretrain_default(true);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  capa::save_checkpoint(out, weights.named());
  std::cout << "wrote " << out << '\n';
  return 0;
}
