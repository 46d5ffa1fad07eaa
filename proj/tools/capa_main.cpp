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

// capa command-line driver: scene generation, pretraining, adaptation,
// evaluation, benchmark sweeps and depth rendering.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "capa/checkpoint.hpp"
#include "capa/conditioning.hpp"
#include "capa/config.hpp"
#include "capa/error.hpp"
#include "capa/experiment.hpp"
#include "capa/kernels.hpp"
#include "capa/metrics.hpp"
#include "capa/model.hpp"
#include "capa/peft.hpp"
#include "capa/render.hpp"
#include "capa/storage.hpp"
#include "capa/tta.hpp"

namespace fs = std::filesystem;
using namespace capa;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string scene_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04zu", i);
  return buf;
}

fs::path per_frame_path(const fs::path& base, std::size_t frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), ".frame_%04zu", frame);
  return base.parent_path() / (base.stem().string() + buf + base.extension().string());
}

RunConfig load_config(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

std::vector<SceneSequence> load_scenes(const fs::path& root) {
  std::vector<SceneSequence> out;
  for (const auto& dir : list_scene_dirs(root)) out.push_back(load_scene(dir));
  if (out.empty()) throw LoadError("no scene directories under " + root.string());
  return out;
}

void write_text_atomically(const fs::path& path, const std::string& text) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << text;
  }
  fs::rename(tmp, path);
}

struct ConditionFlags {
  std::string pattern;
  std::optional<double> noise;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--pattern", pattern, std::string("Condition pattern: ") + std::string(kPatternUsage));
    app->add_option("--noise", noise, "Fraction of condition points corrupted");
    app->add_option("--condition-seed", seed, "Condition sampling seed");
  }

  ConditionSpec resolve(const RunConfig& cfg) const {
    ConditionSpec spec = cfg.condition;
    if (!pattern.empty()) {
      try {
        const auto parsed = parse_pattern(pattern);
        spec.pattern = parsed.pattern;
        spec.count = parsed.count;
        spec.max_depth = parsed.max_depth;
      } catch (const ConfigurationError& e) {
        throw UsageError(e.what());
      }
    }
    if (noise) spec.noise_fraction = *noise;
    if (seed) spec.seed = *seed;
    return spec;
  }
};

int cmd_gen_scenes(const std::string& out, std::uint64_t seed, std::size_t n_train,
                   std::size_t n_test, const RunConfig& cfg, const std::string& shift_text) {
  ScenesOptions opts = cfg.scenes;
  opts.seed = seed;
  opts.train = n_train;
  opts.test = n_test;
  if (!shift_text.empty()) opts.test_shift = shift_text;
  const auto train = generate_corpus(opts.seed + kTrainSeedBase, opts.train, opts.train_frames);
  for (std::size_t i = 0; i < train.size(); ++i) save_scene(fs::path(out) / "train" / scene_name(i), train[i]);
  const auto test = make_test_corpus(opts);
  for (std::size_t i = 0; i < test.size(); ++i) save_scene(fs::path(out) / "test" / scene_name(i), test[i]);
  std::cout << "wrote " << train.size() << " training and " << test.size() << " test scenes to "
            << out << '\n';
  return kOk;
}

int cmd_pretrain(const std::string& data, const std::string& out, RunConfig cfg,
                 std::optional<std::size_t> epochs, std::optional<std::uint64_t> seed) {
  if (epochs) cfg.pretrain.epochs = *epochs;
  if (seed) cfg.pretrain.seed = *seed;
  if (cfg.pretrain.epochs == 0) throw UsageError("nothing to train (epochs = 0)");
  fs::path root(data);
  if (fs::exists(root / "train")) root /= "train";
  const auto scenes = load_scenes(root);
  cfg.pretrain.on_epoch = [](std::size_t e, double loss) {
    std::cout << "epoch " << e + 1 << " loss " << loss << '\n';
  };
  const auto weights = pretrain(cfg.model, scenes, cfg.pretrain);
  save_checkpoint(out, weights.named());
  std::cout << "saved " << count_parameters(weights) << " parameters to " << out << '\n';
  return kOk;
}

struct AdaptFlags {
  std::string model, scene, peft = "lora", sharing, out, trace, config;
  std::optional<std::size_t> rank, n_prompt, steps;
  std::optional<double> lr, batch_fraction;
  std::optional<std::uint64_t> seed;
  ConditionFlags condition;
};

int cmd_adapt(const AdaptFlags& f) {
  RunConfig cfg = load_config(f.config);
  AdapterKind kind;
  try {
    kind = parse_adapter_kind(f.peft);
    if (!f.sharing.empty()) cfg.tta.sharing = parse_sharing(f.sharing);
  } catch (const ConfigurationError& e) {
    throw UsageError(e.what());
  }
  const auto spec = f.condition.resolve(cfg);
  const auto weights = ModelWeights::from_named(load_checkpoint(f.model));
  auto seq = load_scene(f.scene);
  SamplerLog log;
  attach_conditions(seq, spec, &log);
  for (const auto& w : log.warnings) std::cerr << "warning: " << w << '\n';

  AdapterOptions options = cfg.adapter.adapter;
  options.kind = kind;
  if (f.rank) options.rank = *f.rank;
  if (f.n_prompt) options.n_prompt = *f.n_prompt;
  AdapterInit init = AdapterInit::kLoraDefault;
  if (kind == AdapterKind::kVpt) {
    init = cfg.adapter.init == AdapterInit::kVptPretuned ? AdapterInit::kVptPretuned
                                                         : AdapterInit::kVptXavier;
  }
  TtaConfig tta = cfg.tta_for(kind);
  if (f.steps) tta.steps = *f.steps;
  if (f.lr) tta.lr = *f.lr;
  if (f.batch_fraction) tta.batch_fraction = *f.batch_fraction;
  if (f.seed) tta.seed = *f.seed;
  const auto initial = init_adapters(options, weights.config, init, tta.seed, cfg.adapter.pretuned);
  std::cout << "trainable parameters: " << count_parameters(initial) << '\n';

  const auto result = adapt(weights, initial, seq, tta);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  if (result.adapters.size() == 1 && tta.sharing == Sharing::kPerSequence) {
    save_checkpoint(f.out, result.adapters.front().named());
  } else {
    for (std::size_t i = 0; i < result.adapters.size(); ++i) {
      save_checkpoint(per_frame_path(f.out, i), result.adapters[i].named());
    }
  }
  if (!f.trace.empty()) {
    std::ostringstream os;
    write_trace_csv(os, result.trace);
    write_text_atomically(f.trace, os.str());
  }
  if (!result.trace.empty()) {
    std::cout << "loss " << result.trace.front().loss << " -> " << result.trace.back().loss << '\n';
  }
  return kOk;
}

int cmd_eval(const std::string& model, const std::string& adapters_path, const std::string& scene,
             const std::string& out, const std::string& config, const ConditionFlags& condition) {
  const RunConfig cfg = load_config(config);
  const auto spec = condition.resolve(cfg);
  const auto weights = ModelWeights::from_named(load_checkpoint(model));
  auto seq = load_scene(scene);
  attach_conditions(seq, spec);

  std::optional<AdaptResult> adapted;
  if (!adapters_path.empty()) {
    adapted.emplace();
    if (fs::exists(adapters_path)) {
      adapted->adapters.push_back(AdapterSet::from_named(load_checkpoint(adapters_path)));
    } else {
      for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        adapted->adapters.push_back(
            AdapterSet::from_named(load_checkpoint(per_frame_path(adapters_path, i))));
      }
    }
  }
  const auto preds = aligned_predictions(weights, adapted ? &*adapted : nullptr, seq);
  const auto report = evaluate_sequence(preds, seq);
  std::ostringstream os;
  write_eval_csv(os, report);
  if (out.empty() || out == "-") {
    std::cout << os.str();
  } else {
    write_text_atomically(out, os.str());
  }
  write_eval_table(std::cerr, {{adapters_path.empty() ? "base" : "adapted", report}});
  return kOk;
}

int cmd_bench(const std::string& config, const std::string& out, const std::string& model,
              const std::string& scenes_dir) {
  const RunConfig cfg = load_config(config);
  const auto weights = ModelWeights::from_named(load_checkpoint(model));
  std::vector<SceneSequence> scenes;
  if (scenes_dir.empty()) {
    scenes = make_test_corpus(cfg.scenes);
  } else {
    fs::path root(scenes_dir);
    if (fs::exists(root / "test")) root /= "test";
    scenes = load_scenes(root);
  }
  if (cfg.bench.max_scenes > 0 && scenes.size() > cfg.bench.max_scenes) {
    scenes.resize(cfg.bench.max_scenes);
  }
  std::vector<CellResult> results;
  for (const auto& cell : bench_grid(cfg.bench)) {
    results.push_back(run_cell(weights, scenes, cell, cfg));
    const auto& r = results.back();
    std::cout << cell.pattern << ' ' << (cell.peft == AdapterKind::kLora ? "lora" : "vpt") << ' '
              << (cell.sharing == Sharing::kPerSequence ? "sequence" : "frame") << ' ' << cell.steps
              << ' ' << cell.batch_fraction << ": absrel " << r.adapted.absrel << " (base "
              << r.base.absrel << ")\n";
  }
  write_bench_outputs(out, results);
  return kOk;
}

int cmd_render(const std::string& depth_path, const std::string& out, const std::string& colormap,
               const std::string& gt_path) {
  std::ifstream is(depth_path, std::ios::binary);
  if (!is) throw LoadError("cannot open " + depth_path);
  DepthMap depth = read_pfm(is);
  Mask valid(depth.height, depth.width);
  for (std::size_t i = 0; i < depth.size(); ++i) valid.values[i] = depth.values[i] > 0.0F ? 1 : 0;
  Colormap map = Colormap::kDepth;
  if (colormap == "error") {
    map = Colormap::kError;
  } else if (colormap != "depth") {
    throw UsageError("--colormap must be depth or error");
  }
  if (!gt_path.empty()) {
    std::ifstream gs(gt_path, std::ios::binary);
    if (!gs) throw LoadError("cannot open " + gt_path);
    const DepthMap gt = read_pfm(gs);
    if (!gt.same_extent(depth)) throw LoadError("prediction and ground truth sizes differ");
    for (std::size_t i = 0; i < depth.size(); ++i) {
      const bool ok = gt.values[i] > 0.0F;
      valid.values[i] = ok ? 1 : 0;
      depth.values[i] = ok ? std::abs(depth.values[i] - gt.values[i]) / gt.values[i] : 0.0F;
    }
    map = Colormap::kError;
  }
  write_png(out, colorize(depth, map, &valid));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  kernels::configure_threads_from_env();
  CLI::App app{"capa: test-time adaptation of a toy depth transformer to sparse depth"};
  app.require_subcommand(1);

  std::string config;
  auto* gen = app.add_subcommand("gen-scenes", "Write the synthetic train/test scene corpus");
  std::string gen_out, gen_shift;
  std::uint64_t gen_seed = 0;
  std::size_t gen_train = kTrainScenes, gen_test = kTestScenes;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Corpus seed")->capture_default_str();
  gen->add_option("--train", gen_train, "Training scenes")->capture_default_str();
  gen->add_option("--test", gen_test, "Held-out scenes")->capture_default_str();
  gen->add_option("--test-shift", gen_shift, "fog:BETA | gamma:G | texture | none");
  gen->add_option("--config", config, "Run configuration file");

  auto* pre = app.add_subcommand("pretrain", "Pretrain the base depth model");
  std::string pre_data, pre_out;
  std::optional<std::size_t> pre_epochs;
  std::optional<std::uint64_t> pre_seed;
  pre->add_option("--data", pre_data, "Scene corpus directory")->required();
  pre->add_option("--out", pre_out, "Checkpoint to write")->required();
  pre->add_option("--config", config, "Run configuration file");
  pre->add_option("--epochs", pre_epochs, "Override pretrain.epochs");
  pre->add_option("--seed", pre_seed, "Override pretrain.seed");

  auto* ad = app.add_subcommand("adapt", "Adapt PEFT parameters on one scene");
  AdaptFlags af;
  ad->add_option("--model", af.model, "Base model checkpoint")->required();
  ad->add_option("--scene", af.scene, "Scene directory")->required();
  ad->add_option("--peft", af.peft, "lora | vpt")->capture_default_str();
  ad->add_option("--sharing", af.sharing, "frame | sequence");
  ad->add_option("--out", af.out, "Adapter checkpoint to write")->required();
  ad->add_option("--trace", af.trace, "Per-step trace CSV");
  ad->add_option("--config", af.config, "Run configuration file");
  ad->add_option("--rank", af.rank, "LoRA rank");
  ad->add_option("--n-prompt", af.n_prompt, "VPT tokens per layer");
  ad->add_option("--steps", af.steps, "Optimizer steps");
  ad->add_option("--lr", af.lr, "Learning rate");
  ad->add_option("--batch-fraction", af.batch_fraction, "Frames per step, as a fraction");
  ad->add_option("--seed", af.seed, "Adapter init and sampling seed");
  af.condition.add(ad);

  auto* ev = app.add_subcommand("eval", "Evaluate a model (and adapters) on one scene");
  std::string ev_model, ev_adapters, ev_scene, ev_out;
  ConditionFlags ev_cond;
  ev->add_option("--model", ev_model, "Base model checkpoint")->required();
  ev->add_option("--adapters", ev_adapters, "Adapter checkpoint (omit for the base model)");
  ev->add_option("--scene", ev_scene, "Scene directory")->required();
  ev->add_option("--out", ev_out, "Report CSV (- for stdout)");
  ev->add_option("--config", config, "Run configuration file");
  ev_cond.add(ev);

  auto* be = app.add_subcommand("bench", "Sweep the configured benchmark grid");
  std::string be_out, be_model, be_scenes;
  be->add_option("--config", config, "Run configuration file")->required();
  be->add_option("--out", be_out, "Output directory")->required();
  be->add_option("--model", be_model, "Base model checkpoint")->required();
  be->add_option("--scenes", be_scenes, "Scene corpus (default: generate from [scenes])");

  auto* re = app.add_subcommand("render", "Color-map a PFM depth or error map to PNG");
  std::string re_depth, re_out, re_map = "depth", re_gt;
  re->add_option("--depth", re_depth, "PFM depth map")->required();
  re->add_option("--out", re_out, "PNG to write")->required();
  re->add_option("--colormap", re_map, "depth | error")->capture_default_str();
  re->add_option("--gt", re_gt, "Ground-truth PFM; renders relative error instead");

  auto* keys = app.add_subcommand("config-keys", "List every configuration key and its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_scenes(gen_out, gen_seed, gen_train, gen_test, load_config(config), gen_shift);
    if (*pre) return cmd_pretrain(pre_data, pre_out, load_config(config), pre_epochs, pre_seed);
    if (*ad) return cmd_adapt(af);
    if (*ev) return cmd_eval(ev_model, ev_adapters, ev_scene, ev_out, config, ev_cond);
    if (*be) return cmd_bench(config, be_out, be_model, be_scenes);
    if (*re) return cmd_render(re_depth, re_out, re_map, re_gt);
    if (*keys) {
      std::cout << describe_run_config();
      return kOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
