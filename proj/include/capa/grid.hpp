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
#include <vector>

namespace capa {

/// Row-major 2-D raster.
template <typename T>
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(std::size_t h, std::size_t w, T fill = T{}) : height(h), width(w), values(h * w, fill) {}

  std::size_t size() const noexcept { return values.size(); }
  T& at(std::size_t row, std::size_t col) { return values[row * width + col]; }
  const T& at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
  bool same_extent(const auto& other) const noexcept {
    return height == other.height && width == other.width;
  }
  bool operator==(const Grid&) const = default;
};

using Image = Grid<float>;
using DepthMap = Grid<float>;
using Mask = Grid<std::uint8_t>;

inline std::size_t count(const Mask& mask) {
  std::size_t n = 0;
  for (auto v : mask.values) n += v != 0 ? 1 : 0;
  return n;
}

}  // namespace capa
