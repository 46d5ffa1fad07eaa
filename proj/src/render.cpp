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

#include "capa/render.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <stdexcept>

namespace capa {
namespace {

using Rgb = std::array<double, 3>;

Rgb depth_color(double t) {
  static constexpr std::array<Rgb, 5> kStops{{{0, 0, 255}, {0, 255, 255}, {0, 255, 0},
                                              {255, 255, 0}, {255, 0, 0}}};
  const double x = std::clamp(t, 0.0, 1.0) * 4.0;
  const auto i = std::min<std::size_t>(3, static_cast<std::size_t>(x));
  const double f = x - static_cast<double>(i);
  Rgb out{};
  for (std::size_t c = 0; c < 3; ++c) out[c] = kStops[i][c] + f * (kStops[i + 1][c] - kStops[i][c]);
  return out;
}

Rgb error_color(double t) {
  const double g = 255.0 * (1.0 - std::clamp(t, 0.0, 1.0));
  return {255.0, g, g};
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

RgbImage colorize(const DepthMap& values, Colormap map, const Mask* valid) {
  auto included = [&](std::size_t i) {
    return std::isfinite(values.values[i]) && (valid == nullptr || valid->values[i] != 0);
  };
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!included(i)) continue;
    lo = std::min(lo, static_cast<double>(values.values[i]));
    hi = std::max(hi, static_cast<double>(values.values[i]));
  }
  RgbImage img{values.width, values.height, std::vector<std::uint8_t>(values.size() * 3, 0)};
  const double range = hi - lo;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!included(i)) continue;
    const double t = range > 0.0 ? (values.values[i] - lo) / range : 0.0;
    const Rgb c = map == Colormap::kDepth ? depth_color(t) : error_color(t);
    for (std::size_t k = 0; k < 3; ++k) img.rgb[i * 3 + k] = static_cast<std::uint8_t>(std::lround(c[k]));
  }
  return img;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.rgb.size() != image.width * image.height * 3 || image.width == 0) {
    throw std::invalid_argument("write_png: malformed image");
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(tmp.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot write " + tmp.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
    if (png == nullptr || info == nullptr) {
      png_destroy_write_struct(&png, nullptr);
      throw std::runtime_error("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw std::runtime_error("libpng failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t r = 0; r < image.height; ++r) {
      png_write_row(png, image.rgb.data() + r * image.width * 3);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace capa
