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

#include "capa/conditioning.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "capa/error.hpp"
#include "capa/random.hpp"

namespace capa {
namespace {

std::vector<std::size_t> valid_indices(const Mask& valid) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (valid.values[i] != 0) out.push_back(i);
  }
  return out;
}

SparseCondition empty_condition(const DepthMap& gt) {
  return SparseCondition{DepthMap(gt.height, gt.width), Mask(gt.height, gt.width), {}};
}

void select(SparseCondition& cond, const DepthMap& gt, std::size_t index) {
  cond.mask.values[index] = 1;
  cond.values.values[index] = gt.values[index];
}

void warn(SamplerLog* log, std::string message) {
  if (log != nullptr) log->warnings.push_back(std::move(message));
}

// Tops the mask up with random valid pixels until it holds min_points (or
// every valid pixel).
void supplement(SparseCondition& cond, const DepthMap& gt, const Mask& valid,
                std::size_t min_points, Rng& rng, SamplerLog* log) {
  const std::size_t have = count(cond.mask);
  if (have >= min_points) return;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (valid.values[i] != 0 && cond.mask.values[i] == 0) pool.push_back(i);
  }
  const std::size_t need = min_points - have;
  warn(log, "only " + std::to_string(have) + " primary condition points; adding random ones up to " +
                std::to_string(min_points));
  if (pool.size() < need) {
    warn(log, "only " + std::to_string(have + pool.size()) + " valid pixels; fewer than the " +
                  std::to_string(min_points) + " minimum condition points");
  }
  for (std::size_t idx : sample_without_replacement(std::move(pool), need, rng)) {
    select(cond, gt, idx);
  }
}

std::uint64_t noise_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ULL; }

}  // namespace

ConditionSpec parse_pattern(std::string_view text) {
  const auto fail = [&]() {
    return ConfigurationError("invalid condition pattern '" + std::string(text) +
                              "'; valid patterns: " + std::string(kPatternUsage));
  };
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw fail();
  const std::string_view kind = text.substr(0, colon);
  const std::string arg(text.substr(colon + 1));
  ConditionSpec spec;
  try {
    std::size_t used = 0;
    if (kind == "random" || kind == "lidar" || kind == "keypoint") {
      const long long n = std::stoll(arg, &used);
      if (used != arg.size() || n < 1) throw fail();
      spec.count = static_cast<std::size_t>(n);
      spec.pattern = kind == "random" ? PatternKind::kRandom
                     : kind == "lidar" ? PatternKind::kLidar
                                       : PatternKind::kKeypoint;
    } else if (kind == "range") {
      const double d = std::stod(arg, &used);
      if (used != arg.size() || !(d > 0.0)) throw fail();
      spec.pattern = PatternKind::kLimitedRange;
      spec.max_depth = d;
    } else {
      throw fail();
    }
  } catch (const std::logic_error&) {
    throw fail();
  }
  return spec;
}

std::string format_pattern(const ConditionSpec& spec) {
  std::ostringstream os;
  switch (spec.pattern) {
    case PatternKind::kRandom: os << "random:" << spec.count; break;
    case PatternKind::kLimitedRange: os << "range:" << spec.max_depth; break;
    case PatternKind::kLidar: os << "lidar:" << spec.count; break;
    case PatternKind::kKeypoint: os << "keypoint:" << spec.count; break;
  }
  return os.str();
}

SparseCondition sample_random(const DepthMap& gt, const Mask& valid, std::size_t n,
                              std::uint64_t seed, SamplerLog* log) {
  auto pool = valid_indices(valid);
  if (pool.size() < n) {
    warn(log, "requested " + std::to_string(n) + " random points but only " +
                  std::to_string(pool.size()) + " pixels are valid");
  }
  Rng rng(seed);
  SparseCondition cond = empty_condition(gt);
  for (std::size_t idx : sample_without_replacement(std::move(pool), n, rng)) select(cond, gt, idx);
  return cond;
}

SparseCondition sample_limited_range(const DepthMap& gt, const Mask& valid, double max_depth,
                                     std::size_t min_points, std::uint64_t seed, SamplerLog* log) {
  SparseCondition cond = empty_condition(gt);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (valid.values[i] != 0 && gt.values[i] <= max_depth) select(cond, gt, i);
  }
  Rng rng(seed);
  supplement(cond, gt, valid, min_points, rng, log);
  return cond;
}

Grid<double> pitch_map(const Intrinsics& k, std::size_t height, std::size_t width) {
  Grid<double> out(height, width);
  for (std::size_t v = 0; v < height; ++v) {
    for (std::size_t u = 0; u < width; ++u) {
      const double x = (static_cast<double>(u) - k.cx) / k.fx;
      const double y = (static_cast<double>(v) - k.cy) / k.fy;
      out.at(v, u) = std::atan2(y, std::sqrt(1.0 + x * x));
    }
  }
  return out;
}

SparseCondition sample_lidar(const DepthMap& gt, const Mask& valid, const Grid<double>& pitch,
                             std::size_t n_lines, std::size_t min_points, std::uint64_t seed,
                             SamplerLog* log) {
  if (n_lines == 0) throw ConfigurationError("lidar pattern needs at least one scan line");
  if (!pitch.same_extent(gt)) throw DimensionError("lidar: pitch map extent differs from depth");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (valid.values[i] == 0) continue;
    lo = std::min(lo, pitch.values[i]);
    hi = std::max(hi, pitch.values[i]);
  }
  SparseCondition cond = empty_condition(gt);
  if (lo <= hi) {
    // Tallest pixel in angle, measured by central differences down each column.
    double tallest = 0.0;
    for (std::size_t v = 1; v + 1 < pitch.height; ++v) {
      for (std::size_t u = 0; u < pitch.width; ++u) {
        tallest = std::max(tallest, 0.5 * std::fabs(pitch.at(v + 1, u) - pitch.at(v - 1, u)));
      }
    }
    if (pitch.height == 2) tallest = std::fabs(pitch.values[pitch.width] - pitch.values[0]);
    const double half = 0.5 * tallest + 1e-12;
    std::vector<double> lines;
    if (n_lines == 1 || hi - lo < 1e-12) {
      lines.push_back(0.5 * (lo + hi));
    } else {
      for (std::size_t k = 0; k < n_lines; ++k) {
        lines.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n_lines - 1));
      }
    }
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (valid.values[i] == 0) continue;
      for (double phi : lines) {
        if (std::fabs(pitch.values[i] - phi) <= half) {
          select(cond, gt, i);
          break;
        }
      }
    }
  }
  Rng rng(seed);
  supplement(cond, gt, valid, min_points, rng, log);
  return cond;
}

SparseCondition sample_keypoint(const Image& image, const DepthMap& gt, const Mask& valid,
                                std::size_t n, std::size_t min_points, std::uint64_t seed,
                                SamplerLog* log) {
  const std::size_t h = image.height;
  const std::size_t w = image.width;
  const auto px = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
    r = std::clamp<std::ptrdiff_t>(r, 0, static_cast<std::ptrdiff_t>(h) - 1);
    c = std::clamp<std::ptrdiff_t>(c, 0, static_cast<std::ptrdiff_t>(w) - 1);
    return static_cast<double>(image.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
  };
  Grid<double> mag(h, w);
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      const auto r = static_cast<std::ptrdiff_t>(v);
      const auto c = static_cast<std::ptrdiff_t>(u);
      const double gx = (px(r - 1, c + 1) + 2 * px(r, c + 1) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2 * px(r, c - 1) + px(r + 1, c - 1));
      const double gy = (px(r + 1, c - 1) + 2 * px(r + 1, c) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2 * px(r - 1, c) + px(r - 1, c + 1));
      mag.at(v, u) = std::sqrt(gx * gx + gy * gy);
    }
  }
  // Greedy suppression: strongest first (raster order on ties), dropping any
  // candidate within the radius of one already kept.
  constexpr std::ptrdiff_t kRadius = 2;
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    if (mag.values[i] > 0.0 && valid.values[i] != 0) candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return mag.values[a] > mag.values[b];
  });
  Mask blocked(h, w, 0);
  std::vector<std::size_t> maxima;
  for (std::size_t idx : candidates) {
    if (maxima.size() == n) break;
    if (blocked.values[idx] != 0) continue;
    maxima.push_back(idx);
    const auto v = static_cast<std::ptrdiff_t>(idx / w);
    const auto u = static_cast<std::ptrdiff_t>(idx % w);
    for (std::ptrdiff_t r = std::max<std::ptrdiff_t>(0, v - kRadius);
         r <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(h) - 1, v + kRadius); ++r) {
      for (std::ptrdiff_t c = std::max<std::ptrdiff_t>(0, u - kRadius);
           c <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w) - 1, u + kRadius); ++c) {
        blocked.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = 1;
      }
    }
  }
  if (maxima.size() > n) maxima.resize(n);
  SparseCondition cond = empty_condition(gt);
  for (std::size_t idx : maxima) select(cond, gt, idx);
  Rng rng(seed);
  supplement(cond, gt, valid, min_points, rng, log);
  return cond;
}

double depth_percentile(const DepthMap& gt, const Mask& valid, double q) {
  std::vector<double> d;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (valid.values[i] != 0) d.push_back(gt.values[i]);
  }
  if (d.empty()) throw InsufficientDataError("percentile of an empty depth set");
  std::sort(d.begin(), d.end());
  const double pos = q / 100.0 * static_cast<double>(d.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return d[lo] + frac * (d[hi] - d[lo]);
}

SparseCondition inject_noise(const SparseCondition& cond, const DepthMap& gt, const Mask& valid,
                             double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw ConfigurationError("noise fraction must lie in [0, 1]");
  }
  SparseCondition out = cond;
  std::vector<std::size_t> masked;
  for (std::size_t i = 0; i < cond.mask.size(); ++i) {
    if (cond.mask.values[i] != 0) masked.push_back(i);
  }
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(masked.size())));
  if (k == 0) return out;
  const double p10 = depth_percentile(gt, valid, 10.0);
  const double p90 = depth_percentile(gt, valid, 90.0);
  Rng rng(seed);
  auto chosen = sample_without_replacement(std::move(masked), k, rng);
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t idx : chosen) {
    out.values.values[idx] = static_cast<float>(out.values.values[idx] + uniform(rng, p10, p90));
  }
  out.corrupted.insert(out.corrupted.end(), chosen.begin(), chosen.end());
  std::sort(out.corrupted.begin(), out.corrupted.end());
  out.corrupted.erase(std::unique(out.corrupted.begin(), out.corrupted.end()), out.corrupted.end());
  return out;
}

SparseCondition make_condition(const DepthFrame& frame, const ConditionSpec& spec, SamplerLog* log) {
  SparseCondition cond;
  switch (spec.pattern) {
    case PatternKind::kRandom: {
      cond = sample_random(frame.depth, frame.valid, spec.count, spec.seed, log);
      Rng rng(spec.seed + 1);
      supplement(cond, frame.depth, frame.valid, spec.min_points, rng, log);
      break;
    }
    case PatternKind::kLimitedRange:
      cond = sample_limited_range(frame.depth, frame.valid, spec.max_depth, spec.min_points,
                                  spec.seed, log);
      break;
    case PatternKind::kLidar:
      cond = sample_lidar(frame.depth, frame.valid,
                          pitch_map(frame.camera.intrinsics, frame.depth.height, frame.depth.width),
                          spec.count, spec.min_points, spec.seed, log);
      break;
    case PatternKind::kKeypoint:
      cond = sample_keypoint(frame.image, frame.depth, frame.valid, spec.count, spec.min_points,
                             spec.seed, log);
      break;
  }
  return inject_noise(cond, frame.depth, frame.valid, spec.noise_fraction, noise_seed(spec.seed));
}

}  // namespace capa

namespace capa {

std::uint64_t frame_condition_seed(std::uint64_t seed, std::size_t frame) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(frame) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void attach_conditions(SceneSequence& seq, const ConditionSpec& spec, SamplerLog* log) {
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    ConditionSpec s = spec;
    s.seed = frame_condition_seed(spec.seed, i);
    seq.frames[i].condition = make_condition(seq.frames[i], s, log);
  }
}

}  // namespace capa
