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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "capa/conditioning.hpp"
#include "capa/error.hpp"
#include "capa/random.hpp"
#include "capa/scenes.hpp"

namespace capa {
namespace {

DepthMap ramp(std::size_t h, std::size_t w) {
  DepthMap d(h, w);
  for (std::size_t i = 0; i < d.size(); ++i) d.values[i] = 1.0F + 0.01F * static_cast<float>(i);
  return d;
}

bool subset(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.values[i] != 0 && b.values[i] == 0) return false;
  }
  return true;
}

TEST(SampleRandom, ExactCountOnFullGrid) {
  const auto gt = ramp(64, 64);
  const Mask valid(64, 64, 1);
  const auto c = sample_random(gt, valid, 100, 0);
  EXPECT_EQ(count(c.mask), 100U);
  for (std::size_t i = 0; i < c.mask.size(); ++i) {
    EXPECT_EQ(c.values.values[i], c.mask.values[i] != 0 ? gt.values[i] : 0.0F);
  }
}

TEST(SampleRandom, AllValidSelectsWholeMask) {
  const auto gt = ramp(8, 8);
  Mask valid(8, 8, 0);
  for (std::size_t i = 0; i < 64; i += 3) valid.values[i] = 1;
  const auto c = sample_random(gt, valid, count(valid), 1);
  EXPECT_EQ(c.mask, valid);
}

TEST(SampleRandom, TooFewValidWarnsAndTakesAll) {
  const auto gt = ramp(4, 4);
  Mask valid(4, 4, 0);
  valid.values[3] = valid.values[7] = 1;
  SamplerLog log;
  const auto c = sample_random(gt, valid, 10, 1, &log);
  EXPECT_EQ(c.mask, valid);
  EXPECT_EQ(log.warnings.size(), 1U);
}

TEST(SampleRandom, DeterministicPerSeed) {
  const auto gt = ramp(64, 64);
  const Mask valid(64, 64, 1);
  EXPECT_EQ(sample_random(gt, valid, 50, 7).mask, sample_random(gt, valid, 50, 7).mask);
  EXPECT_NE(sample_random(gt, valid, 50, 7).mask, sample_random(gt, valid, 50, 8).mask);
}

TEST(SampleLimitedRange, LargeMaxSelectsAllValid) {
  const auto gt = ramp(8, 8);
  const Mask valid(8, 8, 1);
  EXPECT_EQ(sample_limited_range(gt, valid, 100.0, 5, 0).mask, valid);
}

TEST(SampleLimitedRange, FourPixelToySupplementsEverything) {
  DepthMap gt(2, 2);
  gt.values = {1, 2, 9, 10};
  const Mask valid(2, 2, 1);
  SamplerLog log;
  const auto c = sample_limited_range(gt, valid, 3.0, 5, 0, &log);
  EXPECT_EQ(c.mask, valid);
  EXPECT_FALSE(log.warnings.empty());
}

TEST(SampleLimitedRange, SupplementKeepsPrimarySelection) {
  auto gt = ramp(8, 8);
  gt.values[10] = 0.5F;
  gt.values[20] = 0.5F;
  const Mask valid(8, 8, 1);
  const auto c = sample_limited_range(gt, valid, 0.9, 5, 0);
  EXPECT_EQ(count(c.mask), 5U);
  EXPECT_EQ(c.mask.values[10], 1);
  EXPECT_EQ(c.mask.values[20], 1);
}

TEST(SampleLimitedRange, BelowMinimumDepthIsRandomFallback) {
  const auto gt = ramp(8, 8);
  const Mask valid(8, 8, 1);
  const auto c = sample_limited_range(gt, valid, 0.5, 5, 2);
  EXPECT_EQ(count(c.mask), 5U);
}

TEST(SampleLidar, ZeroLinesIsConfigurationError) {
  const auto gt = ramp(64, 64);
  const Mask valid(64, 64, 1);
  const auto pitch = pitch_map(Intrinsics{}, 64, 64);
  EXPECT_THROW(sample_lidar(gt, valid, pitch, 0, 5, 0), ConfigurationError);
}

TEST(SampleLidar, FullLineCountCoversEveryRow) {
  const auto gt = ramp(64, 64);
  Mask valid(64, 64, 1);
  valid.values[5] = 0;
  const auto pitch = pitch_map(Intrinsics{}, 64, 64);
  const auto c = sample_lidar(gt, valid, pitch, 64, 5, 0);
  EXPECT_EQ(c.mask, valid);
}

TEST(SampleLidar, TwoLinesGiveTwoBands) {
  const auto gt = ramp(64, 64);
  const Mask valid(64, 64, 1);
  const auto pitch = pitch_map(Intrinsics{}, 64, 64);
  const auto c = sample_lidar(gt, valid, pitch, 2, 5, 0);
  std::vector<bool> row_hit(64, false);
  for (std::size_t v = 0; v < 64; ++v) {
    for (std::size_t u = 0; u < 64; ++u) row_hit[v] = row_hit[v] || c.mask.at(v, u) != 0;
  }
  std::size_t bands = 0;
  for (std::size_t v = 0; v < 64; ++v) {
    if (row_hit[v] && (v == 0 || !row_hit[v - 1])) ++bands;
  }
  EXPECT_EQ(bands, 2U);
  EXPECT_TRUE(subset(c.mask, valid));
}

TEST(SampleKeypoint, ConstantImageFallsBackToRandom) {
  const Image img(64, 64, 0.5F);
  const auto gt = ramp(64, 64);
  const Mask valid(64, 64, 1);
  SamplerLog log;
  const auto c = sample_keypoint(img, gt, valid, 50, 5, 0, &log);
  EXPECT_EQ(count(c.mask), 5U);
  EXPECT_FALSE(log.warnings.empty());
}

TEST(SampleKeypoint, BrightPixelNeighbourhoodComesFirst) {
  Image img(32, 32, 0.0F);
  img.at(10, 20) = 1.0F;
  const auto gt = ramp(32, 32);
  const Mask valid(32, 32, 1);
  const auto c = sample_keypoint(img, gt, valid, 1, 1, 0);
  ASSERT_EQ(count(c.mask), 1U);
  std::size_t idx = 0;
  while (c.mask.values[idx] == 0) ++idx;
  EXPECT_LE(std::abs(static_cast<long>(idx / 32) - 10), 1);
  EXPECT_LE(std::abs(static_cast<long>(idx % 32) - 20), 1);
}

TEST(SampleKeypoint, RenderedSceneGivesExactCount) {
  const auto s = generate_scene(0, 1);
  const auto& f = s.frames[0];
  const auto c = sample_keypoint(f.image, f.depth, f.valid, 50, 5, 0);
  EXPECT_EQ(count(c.mask), 50U);
  EXPECT_TRUE(subset(c.mask, f.valid));
}

TEST(InjectNoise, ZeroFractionIsIdentity) {
  const auto gt = ramp(16, 16);
  const Mask valid(16, 16, 1);
  const auto c = sample_random(gt, valid, 40, 3);
  const auto n = inject_noise(c, gt, valid, 0.0, 4);
  EXPECT_EQ(n.values, c.values);
  EXPECT_EQ(n.mask, c.mask);
  EXPECT_TRUE(n.corrupted.empty());
}

TEST(InjectNoise, TenPercentOfHundred) {
  const auto gt = ramp(64, 64);
  const Mask valid(64, 64, 1);
  const auto c = sample_random(gt, valid, 100, 3);
  const auto n = inject_noise(c, gt, valid, 0.1, 4);
  ASSERT_EQ(n.corrupted.size(), 10U);
  const double p10 = depth_percentile(gt, valid, 10.0);
  const double p90 = depth_percentile(gt, valid, 90.0);
  const std::set<std::size_t> bad(n.corrupted.begin(), n.corrupted.end());
  for (std::size_t i = 0; i < n.mask.size(); ++i) {
    if (n.mask.values[i] == 0) continue;
    const double r = n.values.values[i] - gt.values[i];
    if (bad.count(i) != 0) {
      EXPECT_GE(r, p10 - 1e-5);
      EXPECT_LE(r, p90 + 1e-5);
    } else {
      EXPECT_EQ(n.values.values[i], c.values.values[i]);
    }
  }
}

TEST(InjectNoise, FullFractionCorruptsAll) {
  const auto gt = ramp(16, 16);
  const Mask valid(16, 16, 1);
  const auto c = sample_random(gt, valid, 30, 3);
  EXPECT_EQ(inject_noise(c, gt, valid, 1.0, 4).corrupted.size(), 30U);
}

TEST(InjectNoise, RoundsCount) {
  const auto gt = ramp(16, 16);
  const Mask valid(16, 16, 1);
  for (std::size_t n : {1U, 4U, 5U, 14U, 15U, 25U, 35U}) {
    const auto c = sample_random(gt, valid, n, 3);
    EXPECT_EQ(inject_noise(c, gt, valid, 0.1, 4).corrupted.size(),
              static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))));
  }
}

TEST(DepthPercentile, LinearInterpolation) {
  DepthMap gt(1, 5);
  gt.values = {5, 1, 4, 2, 3};
  const Mask valid(1, 5, 1);
  EXPECT_DOUBLE_EQ(depth_percentile(gt, valid, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(depth_percentile(gt, valid, 50.0), 3.0);
  EXPECT_DOUBLE_EQ(depth_percentile(gt, valid, 10.0), 1.4);
  EXPECT_DOUBLE_EQ(depth_percentile(gt, valid, 100.0), 5.0);
}

TEST(Samplers, OutputsLieOnValidityWithMinimumCount) {
  const auto s = generate_scene(4, 2);
  const auto& f = s.frames[1];
  for (const char* pattern : {"random:100", "range:3.0", "lidar:8", "keypoint:50"}) {
    auto spec = parse_pattern(pattern);
    const auto c = make_condition(f, spec);
    EXPECT_TRUE(subset(c.mask, f.valid)) << pattern;
    EXPECT_GE(count(c.mask), std::min(spec.min_points, count(f.valid))) << pattern;
    EXPECT_EQ(c.corrupted.size(),
              static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(count(c.mask)))));
    const auto again = make_condition(f, spec);
    EXPECT_EQ(again.values, c.values) << pattern;
  }
}

TEST(ParsePattern, AcceptsDocumentedForms) {
  EXPECT_EQ(parse_pattern("random:100").pattern, PatternKind::kRandom);
  EXPECT_EQ(parse_pattern("random:100").count, 100U);
  EXPECT_DOUBLE_EQ(parse_pattern("range:5").max_depth, 5.0);
  EXPECT_EQ(parse_pattern("lidar:16").pattern, PatternKind::kLidar);
  EXPECT_EQ(parse_pattern("keypoint:50").pattern, PatternKind::kKeypoint);
  EXPECT_EQ(format_pattern(parse_pattern("lidar:16")), "lidar:16");
  for (const char* bad : {"", "random", "random:x", "sift:10", "random:0", "range:-1"}) {
    EXPECT_THROW(parse_pattern(bad), ConfigurationError) << bad;
  }
}

TEST(AttachConditions, PerFrameSeedsDiffer) {
  auto s = generate_scene(6, 3);
  ConditionSpec spec;
  attach_conditions(s, spec);
  ASSERT_TRUE(s.frames[0].condition.has_value());
  EXPECT_NE(frame_condition_seed(0, 0), frame_condition_seed(0, 1));
  for (const auto& f : s.frames) EXPECT_EQ(count(f.condition->mask), 100U);
}

}  // namespace
}  // namespace capa
