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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "capa/tensor.hpp"

namespace capa {

/// Named tensors in insertion order. Name prefixes discriminate the content:
/// "model." (backbone weights), "lora." and "vpt." (adapters).
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Binary layout, all integers little-endian:
//   "CAPA" | u32 version (=1) | u32 count |
//   count × { u16 name_len | name bytes | u8 rank | rank × u32 extent |
//             u8 dtype (0 = f32) | payload (row-major f32 LE) }
inline constexpr char kCheckpointMagic[4] = {'C', 'A', 'P', 'A'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const NamedTensors& tensors);
NamedTensors read_checkpoint(std::istream& is);

/// Writes to a sibling temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

/// Looks up `name`; throws LoadError naming the missing tensor.
const Tensor& find_tensor(const NamedTensors& tensors, const std::string& name);

}  // namespace capa
