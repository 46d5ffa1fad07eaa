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

#include "capa/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "capa/error.hpp"

namespace capa {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw ConfigurationError("empty list");
  return out;
}

std::size_t to_size(const std::string& s) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || v < 0) throw ConfigurationError("expected a non-negative integer, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) throw ConfigurationError("expected a number, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigurationError("expected true/false, got '" + s + "'");
}

struct Key {
  std::string fallback;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
};

using KeyTable = std::map<std::string, Key>;

const KeyTable& keys() {
  static const KeyTable table = [] {
    KeyTable t;
    auto add = [&t](const std::string& name, std::string fallback, std::string help,
                    std::function<void(RunConfig&, const std::string&)> set) {
      t.emplace(name, Key{std::move(fallback), std::move(help), std::move(set)});
    };
    add("model.image_size", "64", "square input size in pixels",
        [](RunConfig& c, const std::string& v) { c.model.image_size = to_size(v); });
    add("model.patch_size", "8", "patch edge in pixels",
        [](RunConfig& c, const std::string& v) { c.model.patch_size = to_size(v); });
    add("model.channels", "64", "token width d_c",
        [](RunConfig& c, const std::string& v) { c.model.channels = to_size(v); });
    add("model.projection", "64", "attention projection width d_k",
        [](RunConfig& c, const std::string& v) { c.model.projection = to_size(v); });
    add("model.layers", "4", "attention blocks",
        [](RunConfig& c, const std::string& v) { c.model.layers = to_size(v); });
    add("model.mlp_hidden", "256", "MLP hidden width",
        [](RunConfig& c, const std::string& v) { c.model.mlp_hidden = to_size(v); });

    add("pretrain.epochs", "40", "passes over the training frames",
        [](RunConfig& c, const std::string& v) { c.pretrain.epochs = to_size(v); });
    add("pretrain.lr", "0.001", "peak learning rate",
        [](RunConfig& c, const std::string& v) { c.pretrain.lr = to_double(v); });
    add("pretrain.final_lr_factor", "0.1", "learning rate at the last step, relative",
        [](RunConfig& c, const std::string& v) { c.pretrain.final_lr_factor = to_double(v); });
    add("pretrain.batch_size", "8", "frames per update",
        [](RunConfig& c, const std::string& v) { c.pretrain.batch_size = to_size(v); });
    add("pretrain.weight_decay", "0", "AdamW decoupled weight decay",
        [](RunConfig& c, const std::string& v) { c.pretrain.weight_decay = to_double(v); });
    add("pretrain.grad_clip_norm", "1", "global gradient norm cap",
        [](RunConfig& c, const std::string& v) { c.pretrain.grad_clip_norm = to_double(v); });
    add("pretrain.seed", "0", "initialization and shuffling seed",
        [](RunConfig& c, const std::string& v) { c.pretrain.seed = to_size(v); });

    add("tta.peft", "lora", "lora | vpt",
        [](RunConfig& c, const std::string& v) { c.adapter.adapter.kind = parse_adapter_kind(v); });
    add("tta.rank", "4", "LoRA rank",
        [](RunConfig& c, const std::string& v) { c.adapter.adapter.rank = to_size(v); });
    add("tta.alpha", "0", "LoRA scale numerator (0 = 2 x rank)",
        [](RunConfig& c, const std::string& v) { c.adapter.adapter.alpha = to_double(v); });
    add("tta.n_prompt", "16", "VPT tokens per layer",
        [](RunConfig& c, const std::string& v) { c.adapter.adapter.n_prompt = to_size(v); });
    add("tta.layers", "all", "all | shallow | deep",
        [](RunConfig& c, const std::string& v) {
          c.adapter.adapter.selection = parse_layer_selection(v);
        });
    add("tta.vpt_init", "xavier", "xavier | pretuned",
        [](RunConfig& c, const std::string& v) {
          if (v == "xavier") {
            c.adapter.init = AdapterInit::kVptXavier;
          } else if (v == "pretuned") {
            c.adapter.init = AdapterInit::kVptPretuned;
          } else {
            throw ConfigurationError("vpt_init must be xavier or pretuned");
          }
        });
    add("tta.pretuned", "", "checkpoint with pre-tuned prompts",
        [](RunConfig& c, const std::string& v) { c.adapter.pretuned = v; });
    add("tta.steps", "100", "optimizer steps",
        [](RunConfig& c, const std::string& v) { c.tta.steps = to_size(v); });
    add("tta.lr", "0", "learning rate (0 = 1e-3 LoRA, 2e-4 VPT)",
        [](RunConfig& c, const std::string& v) { c.adapter.lr = to_double(v); });
    add("tta.batch_fraction", "0.1", "fraction of frames per step",
        [](RunConfig& c, const std::string& v) { c.tta.batch_fraction = to_double(v); });
    add("tta.sharing", "sequence", "sequence | frame",
        [](RunConfig& c, const std::string& v) { c.tta.sharing = parse_sharing(v); });
    add("tta.beta1", "0.9", "AdamW first-moment decay",
        [](RunConfig& c, const std::string& v) { c.tta.adamw.beta1 = to_double(v); });
    add("tta.beta2", "0.999", "AdamW second-moment decay",
        [](RunConfig& c, const std::string& v) { c.tta.adamw.beta2 = to_double(v); });
    add("tta.eps", "1e-8", "AdamW epsilon",
        [](RunConfig& c, const std::string& v) { c.tta.adamw.eps = to_double(v); });
    add("tta.weight_decay", "0.01", "AdamW decoupled weight decay",
        [](RunConfig& c, const std::string& v) { c.tta.adamw.weight_decay = to_double(v); });
    add("tta.grad_clip_norm", "1", "global gradient norm cap",
        [](RunConfig& c, const std::string& v) { c.tta.grad_clip_norm = to_double(v); });
    add("tta.schedule", "constant", "constant | linear",
        [](RunConfig& c, const std::string& v) {
          if (v == "constant") {
            c.tta.schedule = LrSchedule::kConstant;
          } else if (v == "linear") {
            c.tta.schedule = LrSchedule::kLinearDecay;
          } else {
            throw ConfigurationError("schedule must be constant or linear");
          }
        });
    add("tta.final_lr_factor", "0.33", "learning rate at the last step, relative",
        [](RunConfig& c, const std::string& v) { c.tta.final_lr_factor = to_double(v); });
    add("tta.seed", "0", "adapter init and frame sampling seed",
        [](RunConfig& c, const std::string& v) { c.tta.seed = to_size(v); });
    add("tta.grad_through_align", "false", "differentiate through the affine solve",
        [](RunConfig& c, const std::string& v) { c.tta.grad_through_align = to_bool(v); });

    add("condition.pattern", "random:100", std::string(kPatternUsage),
        [](RunConfig& c, const std::string& v) {
          const auto parsed = parse_pattern(v);
          c.condition.pattern = parsed.pattern;
          c.condition.count = parsed.count;
          c.condition.max_depth = parsed.max_depth;
        });
    add("condition.noise_fraction", "0.1", "fraction of condition points corrupted",
        [](RunConfig& c, const std::string& v) { c.condition.noise_fraction = to_double(v); });
    add("condition.seed", "0", "sampling seed (per-frame seeds derive from it)",
        [](RunConfig& c, const std::string& v) { c.condition.seed = to_size(v); });
    add("condition.min_points", "5", "supplement sparser patterns up to this count",
        [](RunConfig& c, const std::string& v) { c.condition.min_points = to_size(v); });

    add("scenes.seed", "0", "corpus seed offset",
        [](RunConfig& c, const std::string& v) { c.scenes.seed = to_size(v); });
    add("scenes.train", "64", "training scenes",
        [](RunConfig& c, const std::string& v) { c.scenes.train = to_size(v); });
    add("scenes.test", "16", "held-out scenes",
        [](RunConfig& c, const std::string& v) { c.scenes.test = to_size(v); });
    add("scenes.train_frames", "16", "frames per training scene",
        [](RunConfig& c, const std::string& v) { c.scenes.train_frames = to_size(v); });
    add("scenes.test_frames", "32", "frames per held-out scene",
        [](RunConfig& c, const std::string& v) { c.scenes.test_frames = to_size(v); });
    add("scenes.test_shift", "fog:0.3", "fog:BETA | gamma:G | texture | none",
        [](RunConfig& c, const std::string& v) {
          parse_shift(v);
          c.scenes.test_shift = v;
        });

    add("bench.patterns", "random:100", "comma list of condition patterns",
        [](RunConfig& c, const std::string& v) {
          c.bench.patterns = split_list(v);
          for (const auto& p : c.bench.patterns) parse_pattern(p);
        });
    add("bench.peft", "lora", "comma list of lora | vpt",
        [](RunConfig& c, const std::string& v) {
          c.bench.peft = split_list(v);
          for (const auto& p : c.bench.peft) parse_adapter_kind(p);
        });
    add("bench.sharing", "sequence", "comma list of sequence | frame",
        [](RunConfig& c, const std::string& v) {
          c.bench.sharing = split_list(v);
          for (const auto& s : c.bench.sharing) parse_sharing(s);
        });
    add("bench.steps", "100", "comma list of step counts",
        [](RunConfig& c, const std::string& v) {
          c.bench.steps.clear();
          for (const auto& s : split_list(v)) c.bench.steps.push_back(to_size(s));
        });
    add("bench.batch_fraction", "0.1", "comma list of batch fractions",
        [](RunConfig& c, const std::string& v) {
          c.bench.batch_fraction.clear();
          for (const auto& s : split_list(v)) c.bench.batch_fraction.push_back(to_double(s));
        });
    add("bench.max_scenes", "0", "scenes per cell (0 = all)",
        [](RunConfig& c, const std::string& v) { c.bench.max_scenes = to_size(v); });
    return t;
  }();
  return table;
}

}  // namespace

TtaConfig RunConfig::tta_for(AdapterKind kind) const {
  TtaConfig c = tta;
  c.lr = adapter.lr > 0.0 ? adapter.lr : TtaConfig::defaults_for(kind).lr;
  return c;
}

RunConfig parse_run_config(std::istream& is) {
  RunConfig cfg;
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  bool vpt_init_given = false;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigurationError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      static const char* const known[] = {"model", "pretrain", "tta", "condition", "scenes", "bench"};
      if (std::find(std::begin(known), std::end(known), section) == std::end(known)) {
        throw ConfigurationError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigurationError(where + "expected key = value");
    if (section.empty()) throw ConfigurationError(where + "key outside of a section");
    const auto name = section + "." + trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = keys().find(name);
    if (it == keys().end()) throw ConfigurationError(where + "unknown key '" + name + "'");
    try {
      it->second.set(cfg, value);
    } catch (const ConfigurationError& e) {
      throw ConfigurationError(where + name + ": " + e.what());
    }
    if (name == "tta.vpt_init") vpt_init_given = true;
  }
  // The init scheme follows the adapter kind unless given explicitly.
  if (cfg.adapter.adapter.kind == AdapterKind::kLora) {
    cfg.adapter.init = AdapterInit::kLoraDefault;
  } else if (!vpt_init_given) {
    cfg.adapter.init = AdapterInit::kVptXavier;
  }
  cfg.model.validate();
  cfg.tta.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigurationError("cannot read config " + path.string());
  return parse_run_config(is);
}

std::string describe_run_config() {
  std::ostringstream os;
  for (const auto& [name, key] : keys()) {
    os << name << " = " << key.fallback << "  # " << key.help << '\n';
  }
  return os.str();
}

DomainShift parse_shift(const std::string& text) {
  if (text == "none") return {ShiftKind::kFog, 0.0};
  if (text == "texture") return {ShiftKind::kTextureSwap, 0.0};
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const auto kind = text.substr(0, colon);
    const double amount = to_double(text.substr(colon + 1));
    if (kind == "fog") {
      if (amount < 0.0 || amount > 1.0) throw ConfigurationError("fog beta must be in [0, 1]");
      return {ShiftKind::kFog, amount};
    }
    if (kind == "gamma") {
      if (amount < 0.3 || amount > 3.0) throw ConfigurationError("gamma must be in [0.3, 3]");
      return {ShiftKind::kGamma, amount};
    }
  }
  throw ConfigurationError("invalid shift '" + text + "' (fog:BETA | gamma:G | texture | none)");
}

AdapterKind parse_adapter_kind(const std::string& text) {
  if (text == "lora") return AdapterKind::kLora;
  if (text == "vpt") return AdapterKind::kVpt;
  throw ConfigurationError("peft must be lora or vpt, got '" + text + "'");
}

Sharing parse_sharing(const std::string& text) {
  if (text == "sequence") return Sharing::kPerSequence;
  if (text == "frame") return Sharing::kPerFrame;
  throw ConfigurationError("sharing must be sequence or frame, got '" + text + "'");
}

LayerSelection parse_layer_selection(const std::string& text) {
  if (text == "all") return LayerSelection::kAll;
  if (text == "shallow") return LayerSelection::kShallowHalf;
  if (text == "deep") return LayerSelection::kDeepHalf;
  throw ConfigurationError("layers must be all, shallow or deep, got '" + text + "'");
}

}  // namespace capa
