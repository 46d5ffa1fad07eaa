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

#include "capa/scenes.hpp"

namespace capa {
namespace {

SceneConfig odd_config() {
  SceneConfig c;
  c.width = 65;
  c.height = 65;
  return c;
}

Primitive plane(const Vec3& n, double offset, double albedo = 0.7) {
  Primitive p;
  p.kind = PrimitiveKind::kPlane;
  p.a = n;
  p.scalar = offset;
  p.albedo = albedo;
  return p;
}

TEST(GenerateScene, SameSeedIsBitIdentical) {
  const auto a = generate_scene(42, 4);
  const auto b = generate_scene(42, 4);
  ASSERT_EQ(a.frames.size(), 4U);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.frames[i].image, b.frames[i].image);
    EXPECT_EQ(a.frames[i].depth, b.frames[i].depth);
    EXPECT_EQ(a.frames[i].valid, b.frames[i].valid);
  }
  const auto c = generate_scene(43, 4);
  EXPECT_NE(a.frames[0].depth, c.frames[0].depth);
}

TEST(GenerateScene, StructuralInvariants) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto s = generate_scene(seed, 3);
    EXPECT_GE(s.primitives.size(), 3U);
    EXPECT_LE(s.primitives.size(), 8U);
    for (const auto& f : s.frames) {
      EXPECT_EQ(f.image.height, 64U);
      EXPECT_GT(count(f.valid), 0U);
      for (std::size_t p = 0; p < f.depth.size(); ++p) {
        if (f.valid.values[p] != 0) EXPECT_GT(f.depth.values[p], 0.0F);
        EXPECT_GE(f.image.values[p], 0.0F);
        EXPECT_LE(f.image.values[p], 1.0F);
      }
      const auto& r = f.camera.pose.rotation;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          double dot = 0.0;
          for (int k = 0; k < 3; ++k) dot += r[i * 3 + k] * r[j * 3 + k];
          EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-6);
        }
      }
    }
  }
}

TEST(Render, FrontoParallelPlaneHasConstantDepth) {
  const auto seq = make_sequence({plane({0, 0, 1}, 5.0)}, {0, 0, -1}, {Pose{}}, odd_config());
  const auto& f = seq.frames[0];
  EXPECT_FLOAT_EQ(f.depth.at(32, 32), 5.0F);
  for (std::size_t p = 0; p < f.depth.size(); ++p) {
    ASSERT_EQ(f.valid.values[p], 1);
    EXPECT_NEAR(f.depth.values[p], 5.0F, 1e-5F);
  }
}

TEST(Render, SphereOnAxisCenterDepth) {
  Primitive s;
  s.kind = PrimitiveKind::kSphere;
  s.a = {0, 0, 5};
  s.scalar = 1.0;
  const auto seq = make_sequence({s}, {0, 0, -1}, {Pose{}}, odd_config());
  EXPECT_NEAR(seq.frames[0].depth.at(32, 32), 4.0F, 1e-6F);
  EXPECT_EQ(seq.frames[0].valid.at(0, 0), 0);
}

TEST(Render, ShadingMatchesAnalyticNormal) {
  const Vec3 light{0.0, -0.6, -0.8};
  const auto seq = make_sequence({plane({0, 0, 1}, 5.0, 0.5)}, light, {Pose{}}, SceneConfig{});
  const float expected = quantize_intensity(0.5 * 0.8 + SceneConfig{}.ambient);
  for (float v : seq.frames[0].image.values) EXPECT_NEAR(v, expected, 1e-6F);
}

TEST(Render, RerenderReproducesStoredFrames) {
  const auto seq = generate_scene(5, 3);
  for (const auto& f : seq.frames) {
    const auto r = render(seq.primitives, seq.light, f.camera, seq.config);
    EXPECT_EQ(r.image, f.image);
    EXPECT_EQ(r.depth, f.depth);
  }
}

TEST(Correspondences, SameFrameIsIdentity) {
  const auto seq = generate_scene(3, 2);
  const auto c = correspondences(seq, 1, 1);
  EXPECT_EQ(c.size(), count(seq.frames[1].valid));
  for (const auto& x : c) {
    EXPECT_EQ(x.source, x.target);
    EXPECT_EQ(x.z_source, x.z_target);
  }
}

TEST(Correspondences, ForwardTranslationTowardPlane) {
  Pose moved;
  moved.translation = {0, 0, -1};
  const auto seq = make_sequence({plane({0, 0, 1}, 5.0)}, {0, 0, -1}, {Pose{}, moved}, SceneConfig{});
  const auto c = correspondences(seq, 0, 1);
  ASSERT_FALSE(c.empty());
  for (const auto& x : c) EXPECT_NEAR(x.z_target, x.z_source - 1.0, 1e-5);
}

TEST(Correspondences, OccludedPixelsAreExcluded) {
  // A small box in front of a wall; moving sideways hides part of the wall.
  Primitive box;
  box.kind = PrimitiveKind::kBox;
  box.a = {-0.4, -0.4, 2.5};
  box.b = {0.4, 0.4, 3.0};
  Pose moved;
  moved.translation = {-0.6, 0, 0};
  const auto seq =
      make_sequence({plane({0, 0, 1}, 6.0), box}, {0, 0, -1}, {Pose{}, moved}, SceneConfig{});
  const auto c = correspondences(seq, 0, 1);
  const auto& f0 = seq.frames[0];
  const auto& f1 = seq.frames[1];
  std::size_t wall_hidden = 0;
  std::vector<bool> kept(f0.depth.size(), false);
  for (const auto& x : c) {
    kept[x.source] = true;
    // Every kept pair is consistent with the depth actually visible in frame 1.
    EXPECT_LE(std::fabs(x.z_target - f1.depth.values[x.target]) / f1.depth.values[x.target],
              kOcclusionTolerance);
  }
  // Oracle: cast each wall pixel into frame 1 and check whether the box is hit first.
  for (std::size_t v = 0; v < 64; ++v) {
    for (std::size_t u = 0; u < 64; ++u) {
      const std::size_t p = v * 64 + u;
      if (f0.depth.values[p] < 5.9F) continue;
      const Vec3 pc = f0.camera.backproject(static_cast<double>(u), static_cast<double>(v), f0.depth.values[p]);
      const Vec3 pj = transfer_point(f0.camera, f1.camera, pc);
      const auto uv = f1.camera.project(pj);
      const double ru = std::round(uv[0]);
      const double rv = std::round(uv[1]);
      if (ru < 0 || rv < 0 || ru > 63 || rv > 63) continue;
      const float seen = f1.depth.at(static_cast<std::size_t>(rv), static_cast<std::size_t>(ru));
      if (seen < 3.5F) {
        ++wall_hidden;
        EXPECT_FALSE(kept[p]);
      }
    }
  }
  EXPECT_GT(wall_hidden, 0U);
}

TEST(Correspondences, RoundTripReturnsToSource) {
  const auto seq = generate_scene(9, 4);
  for (std::size_t i = 0; i + 1 < 4; ++i) {
    const auto& fi = seq.frames[i];
    const auto& fj = seq.frames[i + 1];
    for (const auto& c : correspondences(seq, i, i + 1)) {
      const Vec3 pj = fj.camera.backproject(c.target_u, c.target_v, c.z_target);
      const auto back = fi.camera.project(transfer_point(fj.camera, fi.camera, pj));
      const double u0 = static_cast<double>(c.source % 64);
      const double v0 = static_cast<double>(c.source / 64);
      EXPECT_LE(std::hypot(back[0] - u0, back[1] - v0), 0.51);
    }
  }
}

TEST(DomainShift, ZeroFogIsIdentity) {
  const auto s = generate_scene(1, 2);
  const auto f = apply_domain_shift(s, {ShiftKind::kFog, 0.0}, 0);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(f.frames[i].image, s.frames[i].image);
}

TEST(DomainShift, UnitGammaIsIdentity) {
  const auto s = generate_scene(1, 2);
  const auto g = apply_domain_shift(s, {ShiftKind::kGamma, 1.0}, 0);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(g.frames[i].image, s.frames[i].image);
}

TEST(DomainShift, DepthIsUntouched) {
  const auto s = generate_scene(2, 2);
  for (const auto& shift : {DomainShift{ShiftKind::kFog, 0.5}, DomainShift{ShiftKind::kGamma, 2.0},
                            DomainShift{ShiftKind::kTextureSwap, 0.0}}) {
    const auto t = apply_domain_shift(s, shift, 3);
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(t.frames[i].depth, s.frames[i].depth);
      EXPECT_EQ(t.frames[i].valid, s.frames[i].valid);
    }
  }
}

// Checker-textured surfaces of equal albedo at two depths: fog compresses
// each surface's intensity range, the far one more.
TEST(DomainShift, FogReducesContrast) {
  Primitive wall = plane({0, 0, 1}, 8.0, 0.8);
  wall.texture = TextureKind::kChecker;
  wall.texture_period = 0.5;
  Primitive box;
  box.kind = PrimitiveKind::kBox;
  box.a = {-0.5, -0.5, 2.0};
  box.b = {0.5, 0.5, 2.5};
  box.albedo = 0.8;
  box.texture = TextureKind::kChecker;
  box.texture_period = 0.25;
  const auto seq = make_sequence({wall, box}, {0, 0, -1}, {Pose{}}, SceneConfig{});
  const auto fog = apply_domain_shift(seq, {ShiftKind::kFog, 0.2}, 0);
  const auto range = [](const DepthFrame& f, bool near) {
    float lo = 1.0F, hi = 0.0F;
    for (std::size_t p = 0; p < f.image.size(); ++p) {
      if ((f.depth.values[p] < 4.0F) != near) continue;
      lo = std::min(lo, f.image.values[p]);
      hi = std::max(hi, f.image.values[p]);
    }
    return hi - lo;
  };
  const float near0 = range(seq.frames[0], true), far0 = range(seq.frames[0], false);
  const float near1 = range(fog.frames[0], true), far1 = range(fog.frames[0], false);
  EXPECT_GT(near0, 0.0F);
  EXPECT_LT(near1, near0);
  EXPECT_LT(far1, far0);
  EXPECT_LT(far1 / far0, near1 / near0);
}

TEST(GenerateCorpus, MatchesIndividualScenes) {
  const auto corpus = generate_corpus(100, 3, 2);
  ASSERT_EQ(corpus.size(), 3U);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto single = generate_scene(100 + i, 2);
    EXPECT_EQ(corpus[i].frames[1].image, single.frames[1].image);
  }
}

}  // namespace
}  // namespace capa
