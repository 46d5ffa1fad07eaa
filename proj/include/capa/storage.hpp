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

#include <filesystem>
#include <istream>
#include <ostream>
#include <vector>

#include "capa/grid.hpp"
#include "capa/scenes.hpp"

namespace capa {

/// Binary 8-bit PGM (P5). Values are clamped to [0, 1] and rounded to 255
/// levels; reading maps back to level / 255.
void write_pgm(std::ostream& os, const Image& image);
Image read_pgm(std::istream& is);

/// Grayscale PFM ("Pf"), little-endian (scale -1.0), rows stored bottom to
/// top. Invalid depth is stored as 0.
void write_pfm(std::ostream& os, const DepthMap& depth);
DepthMap read_pfm(std::istream& is);

/// One line per camera: fx fy cx cy r11 .. r33 t1 t2 t3.
void write_cameras(std::ostream& os, const std::vector<Camera>& cameras);
std::vector<Camera> read_cameras(std::istream& is);

/// frame_%04d.pgm, frame_%04d.pfm and camera.txt under `dir` (created if
/// needed). Geometry and conditions are not part of the layout.
void save_scene(const std::filesystem::path& dir, const SceneSequence& seq);
/// Validity is reconstructed as depth > 0.
SceneSequence load_scene(const std::filesystem::path& dir);

/// Scene directories below `root` in name order (each holding camera.txt).
std::vector<std::filesystem::path> list_scene_dirs(const std::filesystem::path& root);

}  // namespace capa
