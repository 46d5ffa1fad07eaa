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
#include <vector>

#include "capa/grid.hpp"

namespace capa {

/// depth: blue (near) → cyan → green → yellow → red (far).
/// error: white (low) → red (high).
enum class Colormap : std::uint8_t { kDepth, kError };

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

/// Min/max-normalizes the finite values (restricted to `valid` when given)
/// and maps them through the colormap. Excluded pixels are black; a constant
/// map takes the colormap's low end.
RgbImage colorize(const DepthMap& values, Colormap map, const Mask* valid = nullptr);

/// 8-bit RGB PNG, written to a temporary file and renamed into place.
void write_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace capa
