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
#include <span>
#include <string>
#include <vector>

#include "capa/tensor.hpp"

namespace capa {

/// Scale/shift pair mapping a raw prediction onto sparse measurements.
struct AffineFit {
  double scale = 1.0;
  double shift = 0.0;
  double residual = 0.0;  // masked mean |scale·pred + shift - target|
  std::size_t iterations = 0;
};

struct AlignOptions {
  double delta = 1e-4;  // IRLS weight floor: w = 1 / max(|r|, delta)
  double tolerance = 1e-8;
  std::size_t max_iterations = 50;
  double min_scale = 1e-4;
  /// After IRLS, exact descent over lines pinned to one data point: the
  /// slope is a weighted median and the pivot moves to the point it selects.
  /// 0 disables.
  std::size_t polish_iterations = 100;
};

/// Robust L1 fit min_{s,t} sum_M |s·pred + t - target| by iteratively
/// reweighted least squares. Throws InsufficientDataError with fewer than
/// two masked points and DegenerateDataError when every masked prediction is
/// equal.
AffineFit solve_affine_l1(std::span<const float> pred, std::span<const float> target,
                          std::span<const std::uint8_t> mask, const AlignOptions& options = {});

/// As solve_affine_l1, but falls back to the identity fit (and records a
/// warning) when the data cannot determine both parameters.
AffineFit solve_affine_l1_or_identity(std::span<const float> pred, std::span<const float> target,
                                      std::span<const std::uint8_t> mask,
                                      std::vector<std::string>* warnings = nullptr,
                                      const AlignOptions& options = {});

/// Sum over the mask of |scale·pred + shift - target|, in double precision.
double affine_l1_objective(std::span<const float> pred, std::span<const float> target,
                           std::span<const std::uint8_t> mask, double scale, double shift);

/// scale·pred + shift on the tape; (scale, shift) are constants.
Tensor align(const Tensor& pred, const AffineFit& fit);

/// Masked L1 loss of the aligned prediction where the fit is re-solved inside
/// the op and its dependence on `pred` is differentiated by central finite
/// differences over the masked entries.
Tensor aligned_l1_through_solve(const Tensor& pred, const Tensor& target, const Tensor& mask,
                                AffineFit* fit_out = nullptr, const AlignOptions& options = {});

}  // namespace capa
