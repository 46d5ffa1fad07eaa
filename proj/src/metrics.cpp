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

#include "capa/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "capa/error.hpp"

namespace capa {
namespace {

template <typename Fn>
double masked_mean(const DepthMap& pred, const DepthMap& gt, const Mask& valid, Fn&& term) {
  if (!pred.same_extent(gt) || !valid.same_extent(gt)) {
    throw DimensionError("metric: prediction, GT and validity extents differ");
  }
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (valid.values[i] == 0) continue;
    total += term(static_cast<double>(pred.values[i]), static_cast<double>(gt.values[i]));
    ++n;
  }
  if (n == 0) throw UndefinedMetricError("metric over an empty pixel set");
  return total / static_cast<double>(n);
}

}  // namespace

double absrel(const DepthMap& pred, const DepthMap& gt, const Mask& valid) {
  return masked_mean(pred, gt, valid, [](double p, double g) { return std::fabs(p - g) / g; });
}

double mae(const DepthMap& pred, const DepthMap& gt, const Mask& valid) {
  return masked_mean(pred, gt, valid, [](double p, double g) { return std::fabs(p - g); });
}

double rmse(const DepthMap& pred, const DepthMap& gt, const Mask& valid) {
  return std::sqrt(masked_mean(pred, gt, valid, [](double p, double g) { return (p - g) * (p - g); }));
}

ConditionSplit condition_split(const DepthMap& pred, const DepthMap& gt, const Mask& valid,
                               const Mask& condition_mask) {
  Mask in(gt.height, gt.width);
  Mask out(gt.height, gt.width);
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (valid.values[i] == 0) continue;
    if (condition_mask.values[i] != 0) {
      in.values[i] = 1;
      ++n_in;
    } else {
      out.values[i] = 1;
      ++n_out;
    }
  }
  ConditionSplit split;
  if (n_in > 0) split.in_condition = absrel(pred, gt, in);
  if (n_out > 0) split.out_condition = absrel(pred, gt, out);
  return split;
}

double opw(const std::vector<DepthMap>& preds, const SceneSequence& seq) {
  if (preds.size() != seq.frames.size()) {
    throw DimensionError("opw: one prediction per frame required");
  }
  if (preds.size() < 2) throw UndefinedMetricError("opw needs at least two frames");
  double pair_total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i + 1 < preds.size(); ++i) {
    const auto& cam_i = seq.frames[i].camera;
    const auto& cam_j = seq.frames[i + 1].camera;
    const auto& gt_j = seq.frames[i + 1].depth;
    const std::size_t w = gt_j.width;
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& c : correspondences(seq, i, i + 1)) {
      const double u = static_cast<double>(c.source % w);
      const double v = static_cast<double>(c.source / w);
      const double z_pred = preds[i].values[c.source];
      const double warped = transfer_point(cam_i, cam_j, cam_i.backproject(u, v, z_pred))[2];
      if (!(warped > 0.0)) continue;
      const double resample = static_cast<double>(c.z_target) / gt_j.values[c.target];
      const double looked_up = preds[i + 1].values[c.target] * resample;
      total += std::fabs(looked_up - warped) / warped;
      ++n;
    }
    if (n == 0) continue;
    pair_total += total / static_cast<double>(n);
    ++pairs;
  }
  if (pairs == 0) throw UndefinedMetricError("opw: no correspondences survive between frames");
  return 100.0 * pair_total / static_cast<double>(pairs);
}

EvalReport evaluate_sequence(const std::vector<DepthMap>& preds, const SceneSequence& seq) {
  if (preds.size() != seq.frames.size()) {
    throw DimensionError("evaluate: one prediction per frame required");
  }
  EvalReport r;
  r.frames = preds.size();
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  for (std::size_t f = 0; f < preds.size(); ++f) {
    const auto& frame = seq.frames[f];
    r.absrel += absrel(preds[f], frame.depth, frame.valid);
    r.mae += mae(preds[f], frame.depth, frame.valid);
    r.rmse += rmse(preds[f], frame.depth, frame.valid);
    r.valid_pixels += count(frame.valid);
    if (frame.condition) {
      r.condition_pixels += count(frame.condition->mask);
      const auto split = condition_split(preds[f], frame.depth, frame.valid, frame.condition->mask);
      if (split.in_condition) {
        r.absrel_in_condition += *split.in_condition;
        ++n_in;
      }
      if (split.out_condition) {
        r.absrel_out_condition += *split.out_condition;
        ++n_out;
      }
    }
  }
  const auto nf = static_cast<double>(preds.size());
  r.absrel /= nf;
  r.mae /= nf;
  r.rmse /= nf;
  if (n_in > 0) r.absrel_in_condition /= static_cast<double>(n_in);
  if (n_out > 0) r.absrel_out_condition /= static_cast<double>(n_out);
  r.condition_gap = r.absrel_out_condition - r.absrel_in_condition;
  if (preds.size() >= 2) r.opw = opw(preds, seq);
  return r;
}

std::string to_csv_row(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(9) << r.absrel << ',' << r.mae << ',' << r.rmse << ',' << r.opw << ','
     << r.absrel_in_condition << ',' << r.absrel_out_condition << ',' << r.condition_gap << ','
     << r.frames << ',' << r.valid_pixels << ',' << r.condition_pixels;
  return os.str();
}

void write_eval_csv(std::ostream& os, const EvalReport& report) {
  os << kEvalCsvHeader << '\n' << to_csv_row(report) << '\n';
}

void write_eval_table(std::ostream& os, const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t label_width = 6;
  for (const auto& [label, _] : rows) label_width = std::max(label_width, label.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %9s %9s %9s %9s %9s %9s %9s\n", static_cast<int>(label_width),
                "method", "AbsRel%", "MAE%", "RMSE%", "OPW", "In%", "Out%", "Diff%");
  os << buf;
  for (const auto& [label, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %9.2f %9.2f %9.2f %9.2f %9.2f %9.2f %9.2f\n",
                  static_cast<int>(label_width), label.c_str(), 100.0 * r.absrel, 100.0 * r.mae,
                  100.0 * r.rmse, r.opw, 100.0 * r.absrel_in_condition,
                  100.0 * r.absrel_out_condition, 100.0 * r.condition_gap);
    os << buf;
  }
}

}  // namespace capa
