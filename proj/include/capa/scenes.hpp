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

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "capa/grid.hpp"

namespace capa {

using Vec3 = std::array<double, 3>;

struct Intrinsics {
  double fx = 64.0;
  double fy = 64.0;
  double cx = 31.5;
  double cy = 31.5;
};

/// World-to-camera rigid transform: x_cam = R * x_world + t. Camera axes are
/// x right, y down, z forward (image convention).
struct Pose {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 translation{0, 0, 0};

  Vec3 to_camera(const Vec3& world) const;
  Vec3 to_world(const Vec3& cam) const;
  Vec3 center() const;  // camera center in world coordinates
};

struct Camera {
  Intrinsics intrinsics;
  Pose pose;
  std::size_t frame_index = 0;

  /// Camera-space point at pixel (u, v) with camera depth z.
  Vec3 backproject(double u, double v, double z) const;
  /// Pixel coordinates of a camera-space point (z must be positive).
  std::array<double, 2> project(const Vec3& cam) const;
};

/// Builds a world-to-camera pose looking from `eye` toward `target` with
/// world +y up.
Pose look_at(const Vec3& eye, const Vec3& target);

struct SparseCondition {
  DepthMap values;  // C: zero where unobserved
  Mask mask;        // M
  std::vector<std::size_t> corrupted;  // flat indices into the mask, ascending
};

struct DepthFrame {
  Image image;       // intensity in [0, 1], 8-bit quantized
  DepthMap depth;    // camera-space z, zero where invalid
  Mask valid;
  Camera camera;
  std::optional<SparseCondition> condition;
};

enum class PrimitiveKind : std::uint8_t { kPlane, kSphere, kBox };
enum class TextureKind : std::uint8_t { kPlain, kChecker, kStripes };

/// Plane: n·x = offset with `a` = n, `scalar` = offset.
/// Sphere: center `a`, radius `scalar`. Box: axis-aligned corners `a`, `b`.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kPlane;
  Vec3 a{0, 0, 0};
  Vec3 b{0, 0, 0};
  double scalar = 0.0;
  double albedo = 0.7;
  TextureKind texture = TextureKind::kPlain;
  double texture_period = 1.0;
};

struct SceneConfig {
  std::size_t width = 64;
  std::size_t height = 64;
  double focal = 64.0;
  double max_depth = 10.0;  // hits farther than this are invalid
  double ambient = 0.15;
};

struct SceneSequence {
  std::uint64_t seed = 0;
  SceneConfig config;
  std::vector<Primitive> primitives;
  Vec3 light{0, 1, 0};  // unit vector toward the light
  std::vector<DepthFrame> frames;
};

Intrinsics default_intrinsics(const SceneConfig& config);

/// Random room (floor + back wall) with 1–6 spheres/boxes, a smooth camera
/// arc, Lambertian shading and ray-cast depth. Pure function of its inputs.
SceneSequence generate_scene(std::uint64_t seed, std::size_t n_frames,
                             const SceneConfig& config = {});

struct RenderResult {
  Image image;
  DepthMap depth;
  Mask valid;
};

RenderResult render(const std::vector<Primitive>& primitives, const Vec3& light,
                    const Camera& camera, const SceneConfig& config);

/// Renders every camera of a hand-built scene.
SceneSequence make_sequence(std::vector<Primitive> primitives, const Vec3& light,
                            const std::vector<Pose>& poses, const SceneConfig& config);

struct Correspondence {
  std::size_t source;  // flat pixel index in frame i
  std::size_t target;  // nearest flat pixel index in frame j
  double target_u = 0.0;
  double target_v = 0.0;
  double z_source = 0.0;
  double z_target = 0.0;  // depth of the transformed point in camera j
};

inline constexpr double kOcclusionTolerance = 0.02;

/// Ground-truth pixel correspondences from frame i to frame j, filtered by
/// bounds, target validity and a relative z-test.
std::vector<Correspondence> correspondences(const SceneSequence& seq, std::size_t i,
                                            std::size_t j);

/// Relative pose mapping camera-i coordinates into camera j.
Vec3 transfer_point(const Camera& from, const Camera& to, const Vec3& cam_point);

enum class ShiftKind : std::uint8_t { kFog, kGamma, kTextureSwap };

struct DomainShift {
  ShiftKind kind = ShiftKind::kFog;
  double amount = 0.0;  // fog beta in [0, 1] or gamma in [0.3, 3]
};

inline constexpr float kFogLevel = 0.8F;

/// Alters intensities only; GT depth and cameras are untouched.
SceneSequence apply_domain_shift(const SceneSequence& seq, const DomainShift& shift,
                                 std::uint64_t seed);

/// Rounds to the 8-bit level grid images are stored on.
float quantize_intensity(double value);

}  // namespace capa

namespace capa {

/// Seeds and sizes of the shipped corpus.
inline constexpr std::uint64_t kTrainSeedBase = 0;
inline constexpr std::size_t kTrainScenes = 64;
inline constexpr std::size_t kTrainFrames = 16;
inline constexpr std::uint64_t kTestSeedBase = 1000;
inline constexpr std::size_t kTestScenes = 16;
inline constexpr std::size_t kTestFrames = 32;

/// Scenes seed_base, seed_base + 1, ..., generated in parallel.
std::vector<SceneSequence> generate_corpus(std::uint64_t seed_base, std::size_t n_scenes,
                                           std::size_t n_frames, const SceneConfig& config = {});

}  // namespace capa
