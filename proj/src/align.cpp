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

#include "capa/align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "capa/error.hpp"
#include "capa/ops.hpp"

namespace capa {
namespace {

struct Sample {
  double x;
  double y;
};

double objective(const std::vector<Sample>& pts, double s, double t) {
  double total = 0.0;
  for (const auto& p : pts) total += std::fabs(s * p.x + t - p.y);
  return total;
}

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

AffineFit solve_points(const std::vector<Sample>& pts, const AlignOptions& opt) {
  if (pts.size() < 2) {
    throw InsufficientDataError("affine fit needs at least 2 condition points, got " +
                                std::to_string(pts.size()));
  }
  const bool all_equal = std::all_of(pts.begin(), pts.end(),
                                     [&](const Sample& p) { return p.x == pts.front().x; });
  if (all_equal) throw DegenerateDataError("affine fit: every masked prediction is identical");

  std::vector<double> w(pts.size(), 1.0);
  double s = 1.0;
  double t = 0.0;
  std::size_t iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double wi = w[i];
      sw += wi;
      swx += wi * pts[i].x;
      swy += wi * pts[i].y;
      swxx += wi * pts[i].x * pts[i].x;
      swxy += wi * pts[i].x * pts[i].y;
    }
    const double det = sw * swxx - swx * swx;
    double s_new = det > 0.0 ? (sw * swxy - swx * swy) / det : s;
    s_new = std::max(s_new, opt.min_scale);
    const double t_new = (swy - s_new * swx) / sw;
    const double change = std::fabs(s_new - s) / std::fabs(s_new) + std::fabs(t_new - t);
    s = s_new;
    t = t_new;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      w[i] = 1.0 / std::max(std::fabs(s * pts[i].x + t - pts[i].y), opt.delta);
    }
    if (iter > 0 && change < opt.tolerance) {
      ++iter;
      break;
    }
  }

  double best = objective(pts, s, t);
  if (opt.polish_iterations > 0) {
    std::size_t pivot = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (std::fabs(s * pts[i].x + t - pts[i].y) <
          std::fabs(s * pts[pivot].x + t - pts[pivot].y)) {
        pivot = i;
      }
    }
    std::vector<std::pair<double, std::size_t>> slopes;
    for (std::size_t it = 0; it < opt.polish_iterations; ++it) {
      const Sample& p = pts[pivot];
      // Through the pivot, sum |x_i - x_p|·|s - m_i| is minimized by the
      // weighted median of the slopes m_i.
      slopes.clear();
      double total = 0.0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double dx = pts[i].x - p.x;
        if (dx == 0.0) continue;
        slopes.emplace_back((pts[i].y - p.y) / dx, i);
        total += std::fabs(dx);
      }
      if (slopes.empty()) break;
      std::sort(slopes.begin(), slopes.end());
      double acc = 0.0;
      std::size_t pick = 0;
      for (; pick < slopes.size(); ++pick) {
        acc += std::fabs(pts[slopes[pick].second].x - p.x);
        if (acc >= 0.5 * total) break;
      }
      pick = std::min(pick, slopes.size() - 1);
      const double sc = std::max(slopes[pick].first, opt.min_scale);
      const double tc = p.y - sc * p.x;
      const double obj = objective(pts, sc, tc);
      if (!(obj < best)) break;
      best = obj;
      s = sc;
      t = tc;
      if (sc != slopes[pick].first) break;  // pinned at the scale bound
      pivot = slopes[pick].second;
    }
    // Boundary of the feasible set: scale pinned, shift is a median.
    if (s <= opt.min_scale * (1.0 + 1e-12)) {
      std::vector<double> r;
      r.reserve(pts.size());
      for (const auto& q : pts) r.push_back(q.y - opt.min_scale * q.x);
      const double tc = median_of(std::move(r));
      const double obj = objective(pts, opt.min_scale, tc);
      if (obj < best) {
        best = obj;
        s = opt.min_scale;
        t = tc;
      }
    }
  }
  return AffineFit{s, t, best / static_cast<double>(pts.size()), iter};
}

std::vector<Sample> gather_samples(std::span<const float> pred, std::span<const float> target,
                                   std::span<const std::uint8_t> mask) {
  if (pred.size() != target.size() || pred.size() != mask.size()) {
    throw DimensionError("affine fit: prediction, target and mask sizes differ");
  }
  std::vector<Sample> pts;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] != 0) pts.push_back({pred[i], target[i]});
  }
  return pts;
}

std::vector<std::uint8_t> to_mask(const Tensor& m) {
  std::vector<std::uint8_t> out(m.numel());
  auto v = m.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] != 0.0F ? 1 : 0;
  return out;
}

}  // namespace

AffineFit solve_affine_l1(std::span<const float> pred, std::span<const float> target,
                          std::span<const std::uint8_t> mask, const AlignOptions& options) {
  const AffineFit fit = solve_points(gather_samples(pred, target, mask), options);
  if (!std::isfinite(fit.scale) || !std::isfinite(fit.shift)) {
    throw NumericError("affine fit did not produce finite parameters");
  }
  return fit;
}

AffineFit solve_affine_l1_or_identity(std::span<const float> pred, std::span<const float> target,
                                      std::span<const std::uint8_t> mask,
                                      std::vector<std::string>* warnings,
                                      const AlignOptions& options) {
  try {
    return solve_affine_l1(pred, target, mask, options);
  } catch (const InsufficientDataError& e) {
    if (warnings != nullptr) warnings->push_back(std::string(e.what()) + "; using identity fit");
  } catch (const DegenerateDataError& e) {
    if (warnings != nullptr) warnings->push_back(std::string(e.what()) + "; using identity fit");
  }
  AffineFit identity;
  const auto pts = gather_samples(pred, target, mask);
  identity.residual = pts.empty() ? 0.0 : objective(pts, 1.0, 0.0) / static_cast<double>(pts.size());
  return identity;
}

double affine_l1_objective(std::span<const float> pred, std::span<const float> target,
                           std::span<const std::uint8_t> mask, double scale, double shift) {
  return objective(gather_samples(pred, target, mask), scale, shift);
}

Tensor align(const Tensor& pred, const AffineFit& fit) {
  if (!std::isfinite(fit.scale) || !std::isfinite(fit.shift)) {
    throw NumericError("align: non-finite affine fit");
  }
  return ops::affine(pred, static_cast<float>(fit.scale), static_cast<float>(fit.shift));
}

Tensor aligned_l1_through_solve(const Tensor& pred, const Tensor& target, const Tensor& mask,
                                AffineFit* fit_out, const AlignOptions& options) {
  if (pred.shape() != target.shape() || pred.shape() != mask.shape()) {
    throw DimensionError("aligned_l1_through_solve: shape mismatch");
  }
  const std::vector<std::uint8_t> m = to_mask(mask);
  std::vector<std::size_t> idx;
  std::vector<Sample> pts;
  {
    auto pv = pred.values();
    auto tv = target.values();
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] != 0) {
        idx.push_back(i);
        pts.push_back({pv[i], tv[i]});
      }
    }
  }
  const auto loss_of = [options](const std::vector<Sample>& p) {
    const AffineFit f = solve_points(p, options);
    return objective(p, f.scale, f.shift) / static_cast<double>(p.size());
  };
  const AffineFit fit = solve_points(pts, options);
  if (fit_out != nullptr) *fit_out = fit;
  Tensor out = Tensor::scalar(static_cast<float>(fit.residual));
  Tape* tape = Tape::active();
  if (tape != nullptr && pred.requires_grad()) {
    out.set_requires_grad(true);
    tape->record(out, [pred, idx, pts, loss_of](Tape& t, std::span<const float> g) {
      auto* gp = t.grad_buffer(pred);
      if (gp == nullptr) return;
      std::vector<Sample> probe = pts;
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const double x0 = pts[j].x;
        const double h = 1e-3 * std::max(std::fabs(x0), 1e-3);
        probe[j].x = x0 + h;
        const double up = loss_of(probe);
        probe[j].x = x0 - h;
        const double down = loss_of(probe);
        probe[j].x = x0;
        (*gp)[idx[j]] += static_cast<float>(g[0] * (up - down) / (2.0 * h));
      }
    });
  }
  return out;
}

}  // namespace capa
