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

#include "capa/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "capa/random.hpp"

namespace capa {
namespace {

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 normalized(const Vec3& a) { return (1.0 / std::sqrt(dot(a, a))) * a; }

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal{0, 0, 0};
  const Primitive* primitive = nullptr;
};

constexpr double kMinT = 1e-6;

void intersect(const Primitive& p, const Vec3& origin, const Vec3& dir, Hit& best) {
  switch (p.kind) {
    case PrimitiveKind::kPlane: {
      const double denom = dot(p.a, dir);
      if (std::fabs(denom) < 1e-12) return;
      const double t = (p.scalar - dot(p.a, origin)) / denom;
      if (t > kMinT && t < best.t) best = Hit{t, p.a, &p};
      return;
    }
    case PrimitiveKind::kSphere: {
      const Vec3 oc = origin - p.a;
      const double a = dot(dir, dir);
      const double b = dot(oc, dir);
      const double c = dot(oc, oc) - p.scalar * p.scalar;
      const double disc = b * b - a * c;
      if (disc < 0.0) return;
      const double root = std::sqrt(disc);
      double t = (-b - root) / a;
      if (t <= kMinT) t = (-b + root) / a;
      if (t > kMinT && t < best.t) {
        const Vec3 hit = origin + t * dir;
        best = Hit{t, (1.0 / p.scalar) * (hit - p.a), &p};
      }
      return;
    }
    case PrimitiveKind::kBox: {
      double t_near = -std::numeric_limits<double>::infinity();
      double t_far = std::numeric_limits<double>::infinity();
      int axis_near = 0;
      double sign_near = 1.0;
      for (int ax = 0; ax < 3; ++ax) {
        if (std::fabs(dir[ax]) < 1e-15) {
          if (origin[ax] < p.a[ax] || origin[ax] > p.b[ax]) return;
          continue;
        }
        double t0 = (p.a[ax] - origin[ax]) / dir[ax];
        double t1 = (p.b[ax] - origin[ax]) / dir[ax];
        double s = -1.0;  // entering through the low face
        if (t0 > t1) {
          std::swap(t0, t1);
          s = 1.0;
        }
        if (t0 > t_near) {
          t_near = t0;
          axis_near = ax;
          sign_near = s;
        }
        t_far = std::min(t_far, t1);
      }
      if (t_near > t_far || t_near <= kMinT) return;
      if (t_near < best.t) {
        Vec3 n{0, 0, 0};
        n[static_cast<std::size_t>(axis_near)] = sign_near;
        best = Hit{t_near, n, &p};
      }
      return;
    }
  }
}

double texture_factor(const Primitive& p, const Vec3& x) {
  switch (p.texture) {
    case TextureKind::kPlain:
      return 1.0;
    case TextureKind::kChecker: {
      const auto cell = [&](double v) { return static_cast<long>(std::floor(v / p.texture_period)); };
      return ((cell(x[0]) + cell(x[1]) + cell(x[2])) & 1L) != 0 ? 0.6 : 1.0;
    }
    case TextureKind::kStripes:
      return 0.75 + 0.25 * std::sin(2.0 * std::numbers::pi * (x[1] + 0.5 * x[0]) / p.texture_period);
  }
  return 1.0;
}

}  // namespace

Vec3 Pose::to_camera(const Vec3& w) const {
  const auto& r = rotation;
  return {r[0] * w[0] + r[1] * w[1] + r[2] * w[2] + translation[0],
          r[3] * w[0] + r[4] * w[1] + r[5] * w[2] + translation[1],
          r[6] * w[0] + r[7] * w[1] + r[8] * w[2] + translation[2]};
}

Vec3 Pose::to_world(const Vec3& c) const {
  const auto& r = rotation;
  const Vec3 d = c - translation;
  return {r[0] * d[0] + r[3] * d[1] + r[6] * d[2], r[1] * d[0] + r[4] * d[1] + r[7] * d[2],
          r[2] * d[0] + r[5] * d[1] + r[8] * d[2]};
}

Vec3 Pose::center() const { return to_world({0, 0, 0}); }

Vec3 Camera::backproject(double u, double v, double z) const {
  return {(u - intrinsics.cx) / intrinsics.fx * z, (v - intrinsics.cy) / intrinsics.fy * z, z};
}

std::array<double, 2> Camera::project(const Vec3& c) const {
  return {intrinsics.fx * c[0] / c[2] + intrinsics.cx, intrinsics.fy * c[1] / c[2] + intrinsics.cy};
}

Pose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 f = normalized(target - eye);
  const Vec3 x = normalized(cross(f, Vec3{0, 1, 0}));
  const Vec3 y = cross(f, x);
  Pose pose;
  pose.rotation = {x[0], x[1], x[2], y[0], y[1], y[2], f[0], f[1], f[2]};
  const Vec3 rt{dot(x, eye), dot(y, eye), dot(f, eye)};
  pose.translation = {-rt[0], -rt[1], -rt[2]};
  return pose;
}

Intrinsics default_intrinsics(const SceneConfig& config) {
  return Intrinsics{config.focal, config.focal, (static_cast<double>(config.width) - 1.0) / 2.0,
                    (static_cast<double>(config.height) - 1.0) / 2.0};
}

float quantize_intensity(double value) {
  const double clamped = std::clamp(value, 0.0, 1.0);
  return static_cast<float>(std::round(clamped * 255.0) / 255.0);
}

RenderResult render(const std::vector<Primitive>& primitives, const Vec3& light,
                    const Camera& camera, const SceneConfig& config) {
  RenderResult out{Image(config.height, config.width), DepthMap(config.height, config.width),
                   Mask(config.height, config.width)};
  const Vec3 origin = camera.pose.center();
  for (std::size_t v = 0; v < config.height; ++v) {
    for (std::size_t u = 0; u < config.width; ++u) {
      // Unnormalized direction whose camera z component is 1, so the ray
      // parameter at a hit equals camera-space depth.
      const Vec3 dir_cam = camera.backproject(static_cast<double>(u), static_cast<double>(v), 1.0);
      const Vec3 dir = camera.pose.to_world(dir_cam) - origin;
      Hit hit;
      for (const auto& p : primitives) intersect(p, origin, dir, hit);
      if (hit.primitive == nullptr) continue;
      Vec3 n = hit.normal;
      if (dot(n, dir) > 0.0) n = -1.0 * n;
      const Vec3 x = origin + hit.t * dir;
      const double albedo = hit.primitive->albedo * texture_factor(*hit.primitive, x);
      const double shade = albedo * std::max(0.0, dot(n, light)) + config.ambient;
      out.image.at(v, u) = quantize_intensity(shade);
      if (hit.t <= config.max_depth) {
        out.depth.at(v, u) = static_cast<float>(hit.t);
        out.valid.at(v, u) = 1;
      }
    }
  }
  return out;
}

SceneSequence make_sequence(std::vector<Primitive> primitives, const Vec3& light,
                            const std::vector<Pose>& poses, const SceneConfig& config) {
  SceneSequence seq;
  seq.config = config;
  seq.primitives = std::move(primitives);
  seq.light = light;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    DepthFrame frame;
    frame.camera = Camera{default_intrinsics(config), poses[i], i};
    auto r = render(seq.primitives, seq.light, frame.camera, config);
    frame.image = std::move(r.image);
    frame.depth = std::move(r.depth);
    frame.valid = std::move(r.valid);
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

SceneSequence generate_scene(std::uint64_t seed, std::size_t n_frames, const SceneConfig& config) {
  Rng rng(seed);
  std::vector<Primitive> prims;

  const double floor_drop = uniform(rng, 1.1, 1.8);
  const double wall_z = uniform(rng, 6.0, 11.0);
  const auto random_texture = [&rng]() {
    const double pick = uniform01(rng);
    return pick < 0.2 ? TextureKind::kPlain : (pick < 0.7 ? TextureKind::kChecker : TextureKind::kStripes);
  };

  Primitive floor{PrimitiveKind::kPlane, {0, 1, 0}, {0, 0, 0}, -floor_drop, uniform(rng, 0.4, 0.9)};
  floor.texture = random_texture();
  floor.texture_period = uniform(rng, 0.4, 1.2);
  prims.push_back(floor);
  Primitive wall{PrimitiveKind::kPlane, {0, 0, 1}, {0, 0, 0}, wall_z, uniform(rng, 0.4, 0.9)};
  wall.texture = random_texture();
  wall.texture_period = uniform(rng, 0.5, 1.5);
  prims.push_back(wall);

  const std::size_t n_objects = 1 + uniform_index(rng, 6);
  for (std::size_t k = 0; k < n_objects; ++k) {
    Primitive obj;
    obj.albedo = uniform(rng, 0.3, 1.0);
    obj.texture = random_texture();
    obj.texture_period = uniform(rng, 0.2, 0.6);
    const double x = uniform(rng, -2.8, 2.8);
    const double z = uniform(rng, 2.5, wall_z - 0.8);
    if (uniform01(rng) < 0.5) {
      obj.kind = PrimitiveKind::kSphere;
      obj.scalar = uniform(rng, 0.3, 1.0);
      const double lift = uniform01(rng) < 0.3 ? uniform(rng, 0.3, 1.2) : 0.0;
      obj.a = {x, -floor_drop + obj.scalar + lift, z};
    } else {
      obj.kind = PrimitiveKind::kBox;
      const double sx = uniform(rng, 0.3, 0.9);
      const double sy = uniform(rng, 0.4, 1.8);
      const double sz = uniform(rng, 0.3, 0.9);
      obj.a = {x - sx, -floor_drop, z - sz};
      obj.b = {x + sx, -floor_drop + sy, z + sz};
    }
    prims.push_back(obj);
  }

  const Vec3 light = normalized(
      Vec3{uniform(rng, -0.6, 0.6), uniform(rng, 0.5, 1.0), uniform(rng, -0.9, -0.2)});

  // Smooth arc: lateral sweep with a slight dolly and a vertical bulge.
  const Vec3 eye0{uniform(rng, -0.8, 0.8), uniform(rng, -0.2, 0.3), uniform(rng, -0.5, 0.0)};
  const double sweep = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.6, 1.4);
  const Vec3 delta{sweep, uniform(rng, -0.15, 0.15), uniform(rng, 0.0, 0.9)};
  const double bulge = uniform(rng, -0.25, 0.25);
  const Vec3 target0{uniform(rng, -0.8, 0.8), -0.35 * floor_drop, 0.55 * wall_z};
  const Vec3 target_drift{uniform(rng, -0.6, 0.6), uniform(rng, -0.2, 0.2), 0.0};

  std::vector<Pose> poses;
  for (std::size_t i = 0; i < n_frames; ++i) {
    const double s = n_frames > 1 ? static_cast<double>(i) / static_cast<double>(n_frames - 1) : 0.0;
    const Vec3 eye = eye0 + s * delta + Vec3{0, bulge * std::sin(std::numbers::pi * s), 0};
    poses.push_back(look_at(eye, target0 + s * target_drift));
  }
  SceneSequence seq = make_sequence(std::move(prims), light, poses, config);
  seq.seed = seed;
  return seq;
}

Vec3 transfer_point(const Camera& from, const Camera& to, const Vec3& cam_point) {
  return to.pose.to_camera(from.pose.to_world(cam_point));
}

std::vector<Correspondence> correspondences(const SceneSequence& seq, std::size_t i,
                                            std::size_t j) {
  const DepthFrame& fi = seq.frames.at(i);
  const DepthFrame& fj = seq.frames.at(j);
  const std::size_t w = fi.depth.width;
  const std::size_t h = fi.depth.height;
  std::vector<Correspondence> out;
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      const std::size_t src = v * w + u;
      if (fi.valid.values[src] == 0) continue;
      const float z = fi.depth.values[src];
      Correspondence c;
      c.source = src;
      c.z_source = z;
      if (i == j) {
        c.target = src;
        c.target_u = static_cast<double>(u);
        c.target_v = static_cast<double>(v);
        c.z_target = z;
        out.push_back(c);
        continue;
      }
      const Vec3 pc = fi.camera.backproject(static_cast<double>(u), static_cast<double>(v), z);
      const Vec3 pj = transfer_point(fi.camera, fj.camera, pc);
      if (pj[2] <= 1e-9) continue;
      const auto uv = fj.camera.project(pj);
      const double ru = std::round(uv[0]);
      const double rv = std::round(uv[1]);
      if (ru < 0 || rv < 0 || ru >= static_cast<double>(w) || rv >= static_cast<double>(h)) continue;
      const std::size_t dst = static_cast<std::size_t>(rv) * w + static_cast<std::size_t>(ru);
      if (fj.valid.values[dst] == 0) continue;
      const double zt = fj.depth.values[dst];
      if (std::fabs(pj[2] - zt) / zt > kOcclusionTolerance) continue;
      c.target = dst;
      c.target_u = uv[0];
      c.target_v = uv[1];
      c.z_target = pj[2];
      out.push_back(c);
    }
  }
  return out;
}

SceneSequence apply_domain_shift(const SceneSequence& seq, const DomainShift& shift,
                                 std::uint64_t seed) {
  SceneSequence out = seq;
  switch (shift.kind) {
    case ShiftKind::kFog:
      for (auto& f : out.frames) {
        for (std::size_t p = 0; p < f.image.size(); ++p) {
          const double z = f.valid.values[p] != 0 ? f.depth.values[p] : seq.config.max_depth;
          const double keep = std::exp(-shift.amount * z);
          f.image.values[p] = quantize_intensity(f.image.values[p] * keep + (1.0 - keep) * kFogLevel);
        }
      }
      break;
    case ShiftKind::kGamma:
      for (auto& f : out.frames) {
        for (auto& v : f.image.values) v = quantize_intensity(std::pow(static_cast<double>(v), shift.amount));
      }
      break;
    case ShiftKind::kTextureSwap: {
      Rng rng(seed);
      for (auto& p : out.primitives) {
        const double pick = uniform01(rng);
        p.texture = pick < 0.5 ? TextureKind::kStripes : TextureKind::kChecker;
        p.texture_period = uniform(rng, 0.15, 0.8);
        p.albedo = uniform(rng, 0.3, 1.0);
      }
      for (auto& f : out.frames) {
        auto r = render(out.primitives, out.light, f.camera, out.config);
        f.image = std::move(r.image);
      }
      break;
    }
  }
  return out;
}

}  // namespace capa

namespace capa {

std::vector<SceneSequence> generate_corpus(std::uint64_t seed_base, std::size_t n_scenes,
                                           std::size_t n_frames, const SceneConfig& config) {
  std::vector<SceneSequence> out(n_scenes);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n_scenes; ++i) out[i] = generate_scene(seed_base + i, n_frames, config);
  return out;
}

}  // namespace capa
