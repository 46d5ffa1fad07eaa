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
#include <string>
#include <string_view>
#include <vector>

#include "capa/grid.hpp"
#include "capa/scenes.hpp"

namespace capa {

enum class PatternKind : std::uint8_t { kRandom, kLimitedRange, kLidar, kKeypoint };

struct ConditionSpec {
  PatternKind pattern = PatternKind::kRandom;
  std::size_t count = 100;   // random(n) / keypoint(n) / lidar(n_lines)
  double max_depth = 3.0;    // limited_range
  double noise_fraction = 0.10;
  std::uint64_t seed = 0;
  std::size_t min_points = 5;
};

/// Parses "random:100", "range:3.0", "lidar:16", "keypoint:50".
/// Throws ConfigurationError listing the valid forms.
ConditionSpec parse_pattern(std::string_view text);
std::string format_pattern(const ConditionSpec& spec);
inline constexpr std::string_view kPatternUsage = "random:N | range:MAX_DEPTH | lidar:N_LINES | keypoint:N";

/// Warnings emitted by samplers (e.g. fewer valid pixels than requested).
struct SamplerLog {
  std::vector<std::string> warnings;
};

SparseCondition sample_random(const DepthMap& gt, const Mask& valid, std::size_t n,
                              std::uint64_t seed, SamplerLog* log = nullptr);

SparseCondition sample_limited_range(const DepthMap& gt, const Mask& valid, double max_depth,
                                     std::size_t min_points, std::uint64_t seed,
                                     SamplerLog* log = nullptr);

/// Per-pixel elevation angle (radians, positive downward) of each pixel ray.
Grid<double> pitch_map(const Intrinsics& intrinsics, std::size_t height, std::size_t width);

/// n_lines elevation angles evenly spaced over the valid pitch range; each
/// scan line keeps the pixels within half of the tallest pixel's angular
/// height of its angle.
SparseCondition sample_lidar(const DepthMap& gt, const Mask& valid, const Grid<double>& pitch,
                             std::size_t n_lines, std::size_t min_points, std::uint64_t seed,
                             SamplerLog* log = nullptr);

/// Top-n Sobel-magnitude peaks after greedy non-max suppression (radius 2),
/// restricted to valid GT, ties broken by raster order; random supplement
/// below min_points.
SparseCondition sample_keypoint(const Image& image, const DepthMap& gt, const Mask& valid,
                                std::size_t n, std::size_t min_points, std::uint64_t seed,
                                SamplerLog* log = nullptr);

/// Adds Uniform(p10, p90) of the valid GT depths to round(fraction·|M|)
/// randomly chosen condition points.
SparseCondition inject_noise(const SparseCondition& cond, const DepthMap& gt, const Mask& valid,
                             double fraction, std::uint64_t seed);

/// Linear-interpolated percentile (q in [0, 100]) of the valid GT depths.
double depth_percentile(const DepthMap& gt, const Mask& valid, double q);

/// Dispatches on spec.pattern, then applies spec.noise_fraction.
SparseCondition make_condition(const DepthFrame& frame, const ConditionSpec& spec,
                               SamplerLog* log = nullptr);

}  // namespace capa

namespace capa {

/// Seed of frame i under a sequence-level condition seed (splitmix64 of both).
std::uint64_t frame_condition_seed(std::uint64_t seed, std::size_t frame);

/// Samples a condition for every frame of `seq`, in place.
void attach_conditions(SceneSequence& seq, const ConditionSpec& spec, SamplerLog* log = nullptr);

}  // namespace capa
