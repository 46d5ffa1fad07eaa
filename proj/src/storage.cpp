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

#include "capa/storage.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "capa/error.hpp"

namespace capa {
namespace {

std::string next_token(std::istream& is, const char* what) {
  std::string tok;
  while (is >> std::ws && is.peek() == '#') {
    std::string comment;
    std::getline(is, comment);
  }
  if (!(is >> tok)) throw LoadError(std::string("unexpected end of file reading ") + what);
  return tok;
}

std::size_t parse_extent(const std::string& tok, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoul(tok, &used);
    if (used == tok.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  throw LoadError(std::string("bad ") + what + " '" + tok + "'");
}

std::string frame_name(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04zu.%s", i, ext);
  return buf;
}

}  // namespace

void write_pgm(std::ostream& os, const Image& image) {
  os << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::string row(image.width, '\0');
  for (std::size_t r = 0; r < image.height; ++r) {
    for (std::size_t c = 0; c < image.width; ++c) {
      const double v = std::clamp(static_cast<double>(image.at(r, c)), 0.0, 1.0);
      row[c] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw std::runtime_error("PGM write failed");
}

Image read_pgm(std::istream& is) {
  if (next_token(is, "PGM magic") != "P5") throw LoadError("not a binary PGM (expected P5)");
  const auto w = parse_extent(next_token(is, "PGM width"), "PGM width");
  const auto h = parse_extent(next_token(is, "PGM height"), "PGM height");
  if (next_token(is, "PGM maxval") != "255") throw LoadError("only 8-bit PGM is supported");
  is.get();
  Image img(h, w);
  std::string row(w, '\0');
  for (std::size_t r = 0; r < h; ++r) {
    if (!is.read(row.data(), static_cast<std::streamsize>(w))) throw LoadError("PGM truncated");
    for (std::size_t c = 0; c < w; ++c) {
      img.at(r, c) = static_cast<float>(static_cast<unsigned char>(row[c]) / 255.0);
    }
  }
  return img;
}

void write_pfm(std::ostream& os, const DepthMap& depth) {
  os << "Pf\n" << depth.width << ' ' << depth.height << "\n-1.0\n";
  std::string row(depth.width * 4, '\0');
  for (std::size_t r = depth.height; r-- > 0;) {
    for (std::size_t c = 0; c < depth.width; ++c) {
      const auto bits = std::bit_cast<std::uint32_t>(depth.at(r, c));
      for (std::size_t b = 0; b < 4; ++b) row[c * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFU);
    }
    os.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw std::runtime_error("PFM write failed");
}

DepthMap read_pfm(std::istream& is) {
  const auto magic = next_token(is, "PFM magic");
  if (magic != "Pf") throw LoadError("not a grayscale PFM (expected Pf, got " + magic + ")");
  const auto w = parse_extent(next_token(is, "PFM width"), "PFM width");
  const auto h = parse_extent(next_token(is, "PFM height"), "PFM height");
  const auto scale_tok = next_token(is, "PFM scale");
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw LoadError("bad PFM scale '" + scale_tok + "'");
  }
  if (scale == 0.0) throw LoadError("PFM scale must be non-zero");
  const bool little = scale < 0.0;
  is.get();
  DepthMap d(h, w);
  std::string row(w * 4, '\0');
  for (std::size_t r = h; r-- > 0;) {
    if (!is.read(row.data(), static_cast<std::streamsize>(row.size()))) throw LoadError("PFM truncated");
    for (std::size_t c = 0; c < w; ++c) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 4; ++b) {
        const auto byte = static_cast<std::uint32_t>(static_cast<unsigned char>(row[c * 4 + b]));
        bits |= little ? byte << (8 * b) : byte << (8 * (3 - b));
      }
      d.at(r, c) = std::bit_cast<float>(bits);
    }
  }
  return d;
}

void write_cameras(std::ostream& os, const std::vector<Camera>& cameras) {
  os << std::setprecision(17);
  for (const auto& cam : cameras) {
    const auto& k = cam.intrinsics;
    os << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy;
    for (double r : cam.pose.rotation) os << ' ' << r;
    for (double t : cam.pose.translation) os << ' ' << t;
    os << '\n';
  }
}

std::vector<Camera> read_cameras(std::istream& is) {
  std::vector<Camera> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::vector<double> v;
    double x = 0.0;
    while (ls >> x) v.push_back(x);
    if (!ls.eof() || v.size() != 16) {
      throw LoadError("camera.txt line " + std::to_string(line_no) + ": expected 16 numbers");
    }
    Camera cam;
    cam.intrinsics = {v[0], v[1], v[2], v[3]};
    std::copy(v.begin() + 4, v.begin() + 13, cam.pose.rotation.begin());
    std::copy(v.begin() + 13, v.end(), cam.pose.translation.begin());
    cam.frame_index = out.size();
    out.push_back(cam);
  }
  return out;
}

void save_scene(const std::filesystem::path& dir, const SceneSequence& seq) {
  std::filesystem::create_directories(dir);
  std::vector<Camera> cams;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& f = seq.frames[i];
    {
      std::ofstream os(dir / frame_name(i, "pgm"), std::ios::binary);
      write_pgm(os, f.image);
    }
    DepthMap d = f.depth;
    for (std::size_t p = 0; p < d.size(); ++p) {
      if (f.valid.values[p] == 0) d.values[p] = 0.0F;
    }
    {
      std::ofstream os(dir / frame_name(i, "pfm"), std::ios::binary);
      write_pfm(os, d);
    }
    cams.push_back(f.camera);
  }
  std::ofstream os(dir / "camera.txt");
  write_cameras(os, cams);
  if (!os) throw std::runtime_error("cannot write " + (dir / "camera.txt").string());
}

SceneSequence load_scene(const std::filesystem::path& dir) {
  std::ifstream cams_in(dir / "camera.txt");
  if (!cams_in) throw LoadError("scene directory has no camera.txt: " + dir.string());
  const auto cams = read_cameras(cams_in);
  if (cams.empty()) throw LoadError("camera.txt lists no frames: " + dir.string());
  SceneSequence seq;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    std::ifstream img_in(dir / frame_name(i, "pgm"), std::ios::binary);
    std::ifstream depth_in(dir / frame_name(i, "pfm"), std::ios::binary);
    if (!img_in || !depth_in) {
      throw LoadError("missing image or depth for frame " + std::to_string(i) + " in " + dir.string());
    }
    DepthFrame f;
    f.image = read_pgm(img_in);
    f.depth = read_pfm(depth_in);
    if (!f.image.same_extent(f.depth)) {
      throw LoadError("frame " + std::to_string(i) + ": image and depth sizes differ");
    }
    f.valid = Mask(f.depth.height, f.depth.width);
    for (std::size_t p = 0; p < f.depth.size(); ++p) {
      const float z = f.depth.values[p];
      f.valid.values[p] = std::isfinite(z) && z > 0.0F ? 1 : 0;
      if (f.valid.values[p] == 0) f.depth.values[p] = 0.0F;
    }
    f.camera = cams[i];
    seq.frames.push_back(std::move(f));
  }
  seq.config.width = seq.frames[0].image.width;
  seq.config.height = seq.frames[0].image.height;
  seq.config.focal = cams[0].intrinsics.fx;
  return seq;
}

std::vector<std::filesystem::path> list_scene_dirs(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> out;
  if (std::filesystem::exists(root / "camera.txt")) return {root};
  if (!std::filesystem::is_directory(root)) throw LoadError("not a directory: " + root.string());
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    if (e.is_directory() && std::filesystem::exists(e.path() / "camera.txt")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace capa
