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

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "capa/checkpoint.hpp"
#include "capa/model.hpp"
#include "capa/peft.hpp"
#include "capa/storage.hpp"

namespace capa {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string output;  // stdout and stderr
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(CAPA_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("capa_test_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
  }
  // Default-config model with seeded random weights and one small scene.
  void make_model_and_scene() const {
    save_checkpoint(dir_ / "model.capa", ModelWeights::initialize(ModelConfig{}, 0).named());
    save_scene(dir_ / "scene", generate_scene(kTestSeedBase, 3));
  }
  fs::path dir_;
};

TEST_F(Cli, GenScenesDefaultsAndDeterminism) {
  const auto a = run("gen-scenes --out " + path("a") + " --seed 9");
  ASSERT_EQ(a.code, 0) << a.output;
  EXPECT_EQ(list_scene_dirs(dir_ / "a" / "train").size(), 64U);
  EXPECT_EQ(list_scene_dirs(dir_ / "a" / "test").size(), 16U);
  ASSERT_EQ(run("gen-scenes --out " + path("b") + " --seed 9").code, 0);
  const auto ta = tree(dir_ / "a");
  EXPECT_EQ(ta.size(), 64U * (2 * 16 + 1) + 16U * (2 * 32 + 1));
  EXPECT_TRUE(ta == tree(dir_ / "b"));
  ASSERT_EQ(run("gen-scenes --out " + path("c") + " --seed 10 --train 1 --test 0").code, 0);
  EXPECT_NE(slurp(dir_ / "a/train/scene_0000/frame_0000.pfm"),
            slurp(dir_ / "c/train/scene_0000/frame_0000.pfm"));
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("gen-scenes --seed 1").code, 1);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  write("bad.cfg", "[tta]\nmystery = 1\n");
  const auto r = run("gen-scenes --out " + path("x") + " --config " + path("bad.cfg"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("mystery"), std::string::npos) << r.output;
}

TEST_F(Cli, GenScenesUnwritablePath) {
  write("file", "x");
  EXPECT_NE(run("gen-scenes --train 1 --test 0 --out " + path("file") + "/sub").code, 0);
}

TEST_F(Cli, PretrainEpochsZero) {
  ASSERT_EQ(run("gen-scenes --out " + path("data") + " --train 1 --test 0").code, 0);
  const auto r = run("pretrain --data " + path("data") + " --out " + path("m.capa") + " --epochs 0");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("nothing to train"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir_ / "m.capa"));
}

TEST_F(Cli, PretrainIsLoadableAndBitReproducible) {
  write("small.cfg",
        "[model]\nchannels = 16\nprojection = 16\nmlp_hidden = 32\nlayers = 2\n"
        "[pretrain]\nepochs = 1\nseed = 4\n[scenes]\ntrain_frames = 4\n");
  ASSERT_EQ(run("gen-scenes --out " + path("data") + " --train 2 --test 0 --config " +
                path("small.cfg")).code, 0);
  for (const char* out : {"m1.capa", "m2.capa"}) {
    const auto r = run("pretrain --data " + path("data") + " --out " + path(out) + " --config " +
                       path("small.cfg"));
    ASSERT_EQ(r.code, 0) << r.output;
  }
  EXPECT_EQ(slurp(dir_ / "m1.capa"), slurp(dir_ / "m2.capa"));
  const auto w = ModelWeights::from_named(load_checkpoint(dir_ / "m1.capa"));
  EXPECT_EQ(w.config.layers, 2U);
  EXPECT_EQ(w.named().size(), load_checkpoint(dir_ / "m1.capa").size());
}

TEST_F(Cli, AdaptReportsLoraCountAndSavesInitAtZeroSteps) {
  make_model_and_scene();
  const auto r = run("adapt --model " + path("model.capa") + " --scene " + path("scene") +
                     " --peft lora --rank 4 --steps 0 --out " + path("ad.capa"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("trainable parameters: 6144"), std::string::npos) << r.output;
  const auto set = AdapterSet::from_named(load_checkpoint(dir_ / "ad.capa"));
  ASSERT_EQ(set.lora.size(), 4U);
  for (const auto& l : set.lora) {
    for (const auto& b : l.second.b) {
      for (float v : b.values()) EXPECT_EQ(v, 0.0F);
    }
  }

  // Identity adapters evaluate exactly like the base model.
  const auto base = run("eval --model " + path("model.capa") + " --scene " + path("scene") +
                        " --out " + path("base.csv"));
  ASSERT_EQ(base.code, 0) << base.output;
  const auto with = run("eval --model " + path("model.capa") + " --adapters " + path("ad.capa") +
                        " --scene " + path("scene") + " --out " + path("with.csv"));
  ASSERT_EQ(with.code, 0) << with.output;
  EXPECT_EQ(slurp(dir_ / "base.csv"), slurp(dir_ / "with.csv"));
  EXPECT_EQ(slurp(dir_ / "base.csv").rfind("absrel,mae,rmse,opw", 0), 0U);
}

TEST_F(Cli, AdaptIsDeterministicAndWritesTrace) {
  make_model_and_scene();
  for (const char* tag : {"1", "2"}) {
    const auto r = run("adapt --model " + path("model.capa") + " --scene " + path("scene") +
                       " --peft vpt --n-prompt 2 --steps 3 --seed 5 --out " + path(std::string("v") + tag + ".capa") +
                       " --trace " + path(std::string("t") + tag + ".csv"));
    ASSERT_EQ(r.code, 0) << r.output;
  }
  EXPECT_EQ(slurp(dir_ / "v1.capa"), slurp(dir_ / "v2.capa"));
  const std::string trace = slurp(dir_ / "t1.csv");
  EXPECT_EQ(trace, slurp(dir_ / "t2.csv"));
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "step,loss,grad_norm,lr,s_mean,t_mean");
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 4);
}

TEST_F(Cli, AdaptInvalidPatternListsValidForms) {
  make_model_and_scene();
  const auto r = run("adapt --model " + path("model.capa") + " --scene " + path("scene") +
                     " --pattern dense:5 --out " + path("ad.capa"));
  EXPECT_EQ(r.code, 1);
  for (const char* form : {"random", "range", "lidar", "keypoint"}) {
    EXPECT_NE(r.output.find(form), std::string::npos) << r.output;
  }
}

TEST_F(Cli, EvalNamesMissingTensor) {
  make_model_and_scene();
  auto named = load_checkpoint(dir_ / "model.capa");
  const std::string dropped = named.back().first;
  named.pop_back();
  save_checkpoint(dir_ / "broken.capa", named);
  const auto r = run("eval --model " + path("broken.capa") + " --scene " + path("scene"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find(dropped), std::string::npos) << r.output;
}

TEST_F(Cli, RenderConstantDepth) {
  save_scene(dir_ / "scene", generate_scene(0, 1));
  const auto r = run("render --depth " + path("scene/frame_0000.pfm") + " --out " + path("d.png"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(slurp(dir_ / "d.png").substr(1, 3), "PNG");
  const auto e = run("render --depth " + path("scene/frame_0000.pfm") + " --gt " +
                     path("scene/frame_0000.pfm") + " --colormap error --out " + path("e.png"));
  EXPECT_EQ(e.code, 0) << e.output;
  EXPECT_NE(run("render --depth " + path("missing.pfm") + " --out " + path("x.png")).code, 0);
}

TEST_F(Cli, BenchSingleCell) {
  write("bench.cfg",
        "[model]\nchannels = 16\nprojection = 16\nmlp_hidden = 32\nlayers = 2\n"
        "[scenes]\ntest = 1\ntest_frames = 3\n[bench]\nsteps = 2\n");
  ModelConfig small;
  small.channels = 16;
  small.projection = 16;
  small.mlp_hidden = 32;
  small.layers = 2;
  save_checkpoint(dir_ / "small.capa", ModelWeights::initialize(small, 0).named());
  const auto r = run("bench --config " + path("bench.cfg") + " --model " + path("small.capa") +
                     " --out " + path("out"));
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string table = slurp(dir_ / "out/table_steps.txt");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 2) << table;
}

TEST_F(Cli, ConfigKeys) {
  const auto r = run("config-keys");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("tta.rank = 4"), std::string::npos);
}

}  // namespace
}  // namespace capa
