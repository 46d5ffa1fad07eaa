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

#include "capa/peft.hpp"

#include <cmath>
#include <string>

#include "capa/error.hpp"
#include "capa/ops.hpp"
#include "capa/random.hpp"

namespace capa {
namespace {

constexpr const char* kProjectionNames[3] = {"q", "k", "v"};

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape), true);
  for (float& v : t.mutable_values()) v = static_cast<float>(uniform(rng, -bound, bound));
  return t;
}

std::size_t parse_index(const std::string& s, const std::string& name) {
  try {
    std::size_t used = 0;
    const auto v = std::stoul(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw LoadError("adapter checkpoint: bad layer index in '" + name + "'");
}

std::vector<std::string> split_dots(const std::string& name) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto dot = name.find('.', start);
    parts.push_back(name.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return parts;
}

}  // namespace

std::vector<Tensor> AdapterSet::parameters() const {
  std::vector<Tensor> out;
  for (const auto& [layer, a] : lora) {
    for (std::size_t m = 0; m < 3; ++m) {
      out.push_back(a.a[m]);
      out.push_back(a.b[m]);
    }
  }
  for (const auto& [layer, p] : vpt) out.push_back(p.prompts);
  return out;
}

NamedTensors AdapterSet::named() const {
  NamedTensors out;
  for (const auto& [layer, a] : lora) {
    for (std::size_t m = 0; m < 3; ++m) {
      const std::string base = "lora." + std::to_string(layer) + "." + kProjectionNames[m];
      out.emplace_back(base + ".A", a.a[m]);
      out.emplace_back(base + ".B", a.b[m]);
    }
  }
  for (const auto& [layer, p] : vpt) out.emplace_back("vpt." + std::to_string(layer) + ".P", p.prompts);
  if (!lora.empty()) out.emplace_back("lora.alpha", Tensor::scalar(static_cast<float>(alpha)));
  return out;
}

AdapterSet AdapterSet::from_named(const NamedTensors& tensors) {
  AdapterSet set;
  bool has_alpha = false;
  for (const auto& [name, t] : tensors) {
    const auto parts = split_dots(name);
    if (parts.size() == 2 && parts[0] == "lora" && parts[1] == "alpha") {
      set.alpha = t.item();
      has_alpha = true;
    } else if (parts.size() == 4 && parts[0] == "lora") {
      const auto layer = parse_index(parts[1], name);
      std::size_t m = 3;
      for (std::size_t k = 0; k < 3; ++k) {
        if (parts[2] == kProjectionNames[k]) m = k;
      }
      if (m == 3 || (parts[3] != "A" && parts[3] != "B") || t.rank() != 2) {
        throw LoadError("adapter checkpoint: unexpected tensor '" + name + "'");
      }
      auto& slot = parts[3] == "A" ? set.lora[layer].a[m] : set.lora[layer].b[m];
      slot = t.clone();
      slot.set_requires_grad(true);
    } else if (parts.size() == 3 && parts[0] == "vpt" && parts[2] == "P") {
      if (t.rank() != 2) throw LoadError("adapter checkpoint: '" + name + "' must be 2-D");
      auto p = t.clone();
      p.set_requires_grad(true);
      set.vpt[parse_index(parts[1], name)].prompts = p;
    } else if (name.rfind("model.", 0) != 0) {
      throw LoadError("adapter checkpoint: unexpected tensor '" + name + "'");
    }
  }
  if (!set.lora.empty() && !set.vpt.empty()) {
    throw LoadError("adapter checkpoint mixes LoRA and VPT tensors");
  }
  if (!set.lora.empty()) {
    set.kind = AdapterKind::kLora;
    for (const auto& [layer, a] : set.lora) {
      for (std::size_t m = 0; m < 3; ++m) {
        if (!a.a[m].defined() || !a.b[m].defined()) {
          throw LoadError("adapter checkpoint is missing a LoRA factor for layer " +
                          std::to_string(layer));
        }
      }
    }
    set.rank = set.lora.begin()->second.a[0].rows();
    if (!has_alpha) set.alpha = 2.0 * static_cast<double>(set.rank);
  } else if (!set.vpt.empty()) {
    set.kind = AdapterKind::kVpt;
    set.n_prompt = set.vpt.begin()->second.prompts.rows();
  }
  return set;
}

AdapterSet AdapterSet::clone() const {
  AdapterSet out = *this;
  for (auto& [layer, a] : out.lora) {
    for (std::size_t m = 0; m < 3; ++m) {
      a.a[m] = a.a[m].clone();
      a.b[m] = a.b[m].clone();
    }
  }
  for (auto& [layer, p] : out.vpt) p.prompts = p.prompts.clone();
  return out;
}

bool AdapterSet::covers(std::size_t layer) const {
  return lora.count(layer) != 0 || vpt.count(layer) != 0;
}

std::vector<std::size_t> selected_layers(LayerSelection selection, std::size_t n_layers) {
  std::vector<std::size_t> out;
  const std::size_t half = n_layers / 2;
  std::size_t from = 0;
  std::size_t to = n_layers;
  if (selection == LayerSelection::kShallowHalf) to = half;
  if (selection == LayerSelection::kDeepHalf) from = half;
  for (std::size_t l = from; l < to; ++l) out.push_back(l);
  return out;
}

AdapterSet init_adapters(const AdapterOptions& options, const ModelConfig& config,
                         AdapterInit init, std::uint64_t seed,
                         const std::filesystem::path& pretuned) {
  config.validate();
  AdapterSet set;
  set.kind = options.kind;
  set.selection = options.selection;
  const auto layers = selected_layers(options.selection, config.layers);
  Rng rng(seed);

  if (options.kind == AdapterKind::kLora) {
    if (init != AdapterInit::kLoraDefault) {
      throw ConfigurationError("LoRA adapters only support the lora-default init");
    }
    const std::size_t r = options.rank;
    if (r < 1 || r > std::min(config.channels, config.projection)) {
      throw ConfigurationError("LoRA rank must be in [1, min(d_c, d_k)], got " + std::to_string(r));
    }
    set.rank = r;
    set.alpha = options.alpha > 0.0 ? options.alpha : 2.0 * static_cast<double>(r);
    const double bound = 1.0 / std::sqrt(static_cast<double>(config.projection));
    for (std::size_t l : layers) {
      LoraAdapter a;
      for (std::size_t m = 0; m < 3; ++m) {
        a.a[m] = uniform_tensor({r, config.projection}, bound, rng);
        a.b[m] = Tensor({config.channels, r}, true);
      }
      set.lora.emplace(l, std::move(a));
    }
    return set;
  }

  set.n_prompt = options.n_prompt;
  if (init == AdapterInit::kVptPretuned) {
    if (pretuned.empty()) throw ConfigurationError("vpt-pretuned init needs a checkpoint path");
    const auto loaded = AdapterSet::from_named(load_checkpoint(pretuned));
    for (std::size_t l : layers) {
      const auto it = loaded.vpt.find(l);
      if (it == loaded.vpt.end()) {
        throw ConfigurationError("pretuned prompts have no tokens for layer " + std::to_string(l));
      }
      const auto& p = it->second.prompts;
      if (p.rows() != options.n_prompt || p.cols() != config.channels) {
        throw ConfigurationError("pretuned prompts for layer " + std::to_string(l) +
                                 " do not match n_prompt × d_c");
      }
      set.vpt[l].prompts = p;
    }
    if (loaded.vpt.size() != layers.size()) {
      throw ConfigurationError("pretuned prompts cover a different layer selection");
    }
    return set;
  }
  if (init != AdapterInit::kVptXavier) {
    throw ConfigurationError("VPT adapters support vpt-xavier or vpt-pretuned init");
  }
  const double bound =
      std::sqrt(6.0 / static_cast<double>(options.n_prompt + config.channels));
  for (std::size_t l : layers) {
    set.vpt[l].prompts = uniform_tensor({options.n_prompt, config.channels}, bound, rng);
  }
  return set;
}

Tensor apply_lora(const Tensor& w, const AdapterSet& adapters, std::size_t layer, Projection m) {
  const auto it = adapters.lora.find(layer);
  if (it == adapters.lora.end()) return w;
  const auto idx = static_cast<std::size_t>(m);
  const auto& a = it->second.a[idx];
  const auto& b = it->second.b[idx];
  if (b.rows() != w.rows() || a.cols() != w.cols() || a.rows() != b.cols()) {
    throw ConfigurationError("LoRA factors do not match projection of layer " +
                             std::to_string(layer));
  }
  const auto factor = static_cast<float>(adapters.alpha / static_cast<double>(adapters.rank));
  return ops::add(w, ops::scale(ops::matmul(b, a), factor));
}

std::pair<Tensor, std::size_t> apply_vpt(const Tensor& x, const AdapterSet& adapters,
                                         std::size_t layer) {
  const auto it = adapters.vpt.find(layer);
  if (it == adapters.vpt.end() || it->second.prompts.rows() == 0) return {x, 0};
  const auto& p = it->second.prompts;
  if (p.cols() != x.cols()) {
    throw ConfigurationError("VPT prompts do not match channel width of layer " +
                             std::to_string(layer));
  }
  return {ops::concat_rows(p, x), p.rows()};
}

std::size_t count_parameters(const AdapterSet& adapters) {
  std::size_t n = 0;
  for (const auto& t : adapters.parameters()) n += t.numel();
  return n;
}

}  // namespace capa
