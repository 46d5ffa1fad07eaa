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

#include "capa/experiment.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "capa/conditioning.hpp"
#include "capa/error.hpp"
#include "capa/peft.hpp"

namespace capa {
namespace {

const char* peft_name(AdapterKind k) { return k == AdapterKind::kLora ? "lora" : "vpt"; }
const char* sharing_name(Sharing s) { return s == Sharing::kPerSequence ? "sequence" : "frame"; }

void write_atomically(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << text;
  }
  std::filesystem::rename(tmp, path);
}

std::string axis_table(const std::string& axis, const std::vector<CellResult>& results,
                       const std::function<std::string(const CellSpec&)>& key) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const CellResult*>> groups;
  for (const auto& r : results) {
    const auto k = key(r.cell);
    if (groups[k].empty()) order.push_back(k);
    groups[k].push_back(&r);
  }
  std::ostringstream os;
  os << std::left << std::setw(14) << axis << std::right << std::setw(10) << "AbsRel"
     << std::setw(10) << "base" << std::setw(8) << "ratio" << std::setw(10) << "OPW"
     << std::setw(10) << "MAE" << std::setw(10) << "RMSE" << std::setw(10) << "In"
     << std::setw(10) << "Out" << std::setw(10) << "Diff" << std::setw(7) << "cells" << '\n';
  os << std::fixed;
  for (const auto& k : order) {
    std::vector<EvalReport> adapted;
    std::vector<EvalReport> base;
    for (const auto* r : groups[k]) {
      adapted.push_back(r->adapted);
      base.push_back(r->base);
    }
    const auto a = mean_report(adapted);
    const auto b = mean_report(base);
    os << std::left << std::setw(14) << k << std::right << std::setprecision(4) << std::setw(10)
       << a.absrel << std::setw(10) << b.absrel << std::setprecision(3) << std::setw(8)
       << (b.absrel > 0.0 ? a.absrel / b.absrel : 0.0) << std::setprecision(4) << std::setw(10)
       << a.opw << std::setw(10) << a.mae << std::setw(10) << a.rmse << std::setw(10)
       << a.absrel_in_condition << std::setw(10) << a.absrel_out_condition << std::setw(10)
       << a.condition_gap << std::setw(7) << groups[k].size() << '\n';
  }
  return os.str();
}

}  // namespace

EvalReport mean_report(const std::vector<EvalReport>& reports) {
  EvalReport m;
  if (reports.empty()) return m;
  const auto n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    m.absrel += r.absrel / n;
    m.mae += r.mae / n;
    m.rmse += r.rmse / n;
    m.opw += r.opw / n;
    m.absrel_in_condition += r.absrel_in_condition / n;
    m.absrel_out_condition += r.absrel_out_condition / n;
    m.condition_gap += r.condition_gap / n;
    m.frames += r.frames;
    m.valid_pixels += r.valid_pixels;
    m.condition_pixels += r.condition_pixels;
  }
  return m;
}

std::vector<SceneSequence> with_conditions(const std::vector<SceneSequence>& scenes,
                                           const std::string& pattern, const RunConfig& config) {
  ConditionSpec spec = parse_pattern(pattern);
  spec.noise_fraction = config.condition.noise_fraction;
  spec.seed = config.condition.seed;
  spec.min_points = config.condition.min_points;
  std::vector<SceneSequence> out = scenes;
  for (auto& seq : out) attach_conditions(seq, spec);
  return out;
}

CellResult run_cell(const ModelWeights& weights, const std::vector<SceneSequence>& scenes,
                    const CellSpec& cell, const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  CellResult result;
  result.cell = cell;
  const auto conditioned = with_conditions(scenes, cell.pattern, config);

  AdapterOptions options = config.adapter.adapter;
  options.kind = cell.peft;
  const AdapterInit init = cell.peft == AdapterKind::kLora ? AdapterInit::kLoraDefault
                           : config.adapter.init == AdapterInit::kVptPretuned
                               ? AdapterInit::kVptPretuned
                               : AdapterInit::kVptXavier;
  const AdapterSet initial =
      init_adapters(options, weights.config, init, config.tta.seed, config.adapter.pretuned);
  TtaConfig tta = config.tta_for(cell.peft);
  tta.sharing = cell.sharing;
  tta.steps = cell.steps;
  tta.batch_fraction = cell.batch_fraction;

  std::vector<EvalReport> base;
  std::vector<EvalReport> adapted;
  std::vector<std::vector<TraceRow>> traces;
  for (const auto& seq : conditioned) {
    base.push_back(evaluate_sequence(aligned_predictions(weights, nullptr, seq), seq));
    const auto run = adapt(weights, initial, seq, tta);
    adapted.push_back(evaluate_sequence(aligned_predictions(weights, &run, seq), seq));
    traces.push_back(run.trace);
  }
  result.base = mean_report(base);
  result.adapted = mean_report(adapted);
  if (!traces.empty()) {
    result.trace.resize(traces.front().size());
    const auto n = static_cast<double>(traces.size());
    for (std::size_t s = 0; s < result.trace.size(); ++s) {
      auto& row = result.trace[s];
      row.step = s + 1;
      for (const auto& t : traces) {
        row.loss += t[s].loss / n;
        row.grad_norm += t[s].grad_norm / n;
        row.lr += t[s].lr / n;
        row.s_mean += t[s].s_mean / n;
        row.t_mean += t[s].t_mean / n;
      }
    }
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<CellSpec> bench_grid(const BenchOptions& options) {
  std::vector<CellSpec> cells;
  for (const auto& pattern : options.patterns) {
    for (const auto& peft : options.peft) {
      for (const auto& sharing : options.sharing) {
        for (std::size_t steps : options.steps) {
          for (double fraction : options.batch_fraction) {
            cells.push_back({pattern, parse_adapter_kind(peft), parse_sharing(sharing), steps,
                             fraction});
          }
        }
      }
    }
  }
  return cells;
}

void write_bench_outputs(const std::filesystem::path& dir, const std::vector<CellResult>& results) {
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  csv << kBenchCsvHeader << '\n' << std::setprecision(9);
  for (const auto& r : results) {
    const auto& a = r.adapted;
    csv << r.cell.pattern << ',' << peft_name(r.cell.peft) << ',' << sharing_name(r.cell.sharing)
        << ',' << r.cell.steps << ',' << r.cell.batch_fraction << ',' << a.absrel << ',' << a.mae
        << ',' << a.rmse << ',' << a.opw << ',' << a.absrel_in_condition << ','
        << a.absrel_out_condition << ',' << a.condition_gap << ',' << r.base.absrel << ','
        << r.base.opw << ',' << r.base.condition_gap << ',' << std::setprecision(3) << r.seconds
        << std::setprecision(9) << '\n';
  }
  write_atomically(dir / "bench.csv", csv.str());

  write_atomically(dir / "table_pattern.txt",
                   axis_table("pattern", results, [](const CellSpec& c) { return c.pattern; }));
  write_atomically(dir / "table_peft.txt", axis_table("peft", results, [](const CellSpec& c) {
                     return std::string(peft_name(c.peft));
                   }));
  write_atomically(dir / "table_sharing.txt", axis_table("sharing", results, [](const CellSpec& c) {
                     return std::string(sharing_name(c.sharing));
                   }));
  write_atomically(dir / "table_steps.txt", axis_table("steps", results, [](const CellSpec& c) {
                     return std::to_string(c.steps);
                   }));
  write_atomically(dir / "table_batch_fraction.txt",
                   axis_table("batch_fraction", results, [](const CellSpec& c) {
                     std::ostringstream os;
                     os << c.batch_fraction;
                     return os.str();
                   }));
}

std::vector<SceneSequence> make_test_corpus(const ScenesOptions& options) {
  const auto shift = parse_shift(options.test_shift);
  auto scenes = generate_corpus(options.seed + kTestSeedBase, options.test, options.test_frames);
  for (auto& seq : scenes) seq = apply_domain_shift(seq, shift, seq.seed);
  return scenes;
}

}  // namespace capa
