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

#include "capa/checkpoint.hpp"

#include <array>
#include <bit>
#include <stdexcept>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "capa/error.hpp"

namespace capa {
namespace {


template <typename T>
void put(std::ostream& os, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFFU);
  }
  os.write(bytes.data(), bytes.size());
}

template <typename T>
T get(std::istream& is, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw LoadError(std::string("checkpoint truncated while reading ") + what);
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

void write_checkpoint(std::ostream& os, const NamedTensors& tensors) {
  os.write(kCheckpointMagic, 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw std::invalid_argument("checkpoint: tensor name too long: " + name.substr(0, 64));
    }
    if (t.rank() > std::numeric_limits<std::uint8_t>::max()) {
      throw std::invalid_argument("checkpoint: tensor rank too large: " + name);
    }
    put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t e : t.shape()) {
      if (e > std::numeric_limits<std::uint32_t>::max()) {
        throw std::invalid_argument("checkpoint: extent too large: " + name);
      }
      put<std::uint32_t>(os, static_cast<std::uint32_t>(e));
    }
    put<std::uint8_t>(os, 0);
    for (float v : t.values()) put<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

NamedTensors read_checkpoint(std::istream& is) {
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw LoadError("checkpoint: bad magic (expected CAPA)");
  }
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw LoadError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto n = get<std::uint32_t>(is, "tensor count");
  NamedTensors out;
  for (std::uint32_t k = 0; k < n; ++k) {
    const auto name_len = get<std::uint16_t>(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw LoadError("checkpoint truncated in tensor name");
    const auto rank = get<std::uint8_t>(is, "rank");
    Shape shape(rank);
    for (auto& e : shape) e = get<std::uint32_t>(is, "extent");
    const auto dtype = get<std::uint8_t>(is, "dtype");
    if (dtype != 0) {
      throw LoadError("checkpoint: tensor '" + name + "' has unknown dtype " + std::to_string(dtype));
    }
    std::vector<float> values(numel(shape));
    for (auto& v : values) v = std::bit_cast<float>(get<std::uint32_t>(is, "payload"));
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    write_checkpoint(os, tensors);
  }
  std::filesystem::rename(tmp, path);
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

const Tensor& find_tensor(const NamedTensors& tensors, const std::string& name) {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw LoadError("checkpoint is missing tensor '" + name + "'");
}

}  // namespace capa
