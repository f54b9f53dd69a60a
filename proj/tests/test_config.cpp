// Copyright 2026 The fpnsrnn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fpnsrnn/archive.hpp"
#include "fpnsrnn/checkpoint.hpp"
#include "fpnsrnn/config.hpp"

using namespace fpnsrnn;
namespace fs = std::filesystem;

TEST(Config, Defaults) {
  const RunConfig c;
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 0.0025);
  EXPECT_EQ(c.batch_size, 1u);
  EXPECT_EQ(c.model.extractor.pyramid_width, 64u);
  EXPECT_EQ(c.model.extractor.srnn_rounds, 2);
  EXPECT_TRUE(c.model.extractor.srnn_enabled);
  EXPECT_NO_THROW(validate(c));
}

TEST(Config, ParsesFlatText) {
  RunConfig c;
  apply_config_text(c,
                    "# toy run\n"
                    "pyramid_width=32\n"
                    "  srnn_rounds = 1  \n"
                    "srnn_enabled=false\n"
                    "learning_rate=0.01 # inline comment\n"
                    "stage_widths=8,8,16,16\n"
                    "absent_class_policy=skip\n\n");
  EXPECT_EQ(c.model.extractor.pyramid_width, 32u);
  EXPECT_EQ(c.model.extractor.srnn_rounds, 1);
  EXPECT_FALSE(c.model.extractor.srnn_enabled);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 0.01);
  EXPECT_EQ(c.model.extractor.backbone.widths[3], 16u);
  EXPECT_EQ(c.absent_class_policy, AbsentClassPolicy::Skip);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  RunConfig c;
  EXPECT_THROW(apply_config_text(c, "pyramid_widht=32\n"), ConfigError);
  EXPECT_THROW(apply_setting(c, "pyramid_width", "32px"), ConfigError);
  EXPECT_THROW(apply_setting(c, "srnn_enabled", "maybe"), ConfigError);
  EXPECT_THROW(apply_setting(c, "stage_widths", "1,2,3"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "just words\n"), ConfigError);
  try {
    apply_config_text(c, "seed=1\nbogus=2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Config, ValidationRanges) {
  auto invalid = [](const char* key, const char* value) {
    RunConfig c;
    apply_setting(c, key, value);
    EXPECT_THROW(validate(c), ConfigError) << key << "=" << value;
  };
  invalid("learning_rate", "0");
  invalid("learning_rate", "-1");
  invalid("pyramid_width", "0");
  invalid("srnn_rounds", "0");
  invalid("batch_size", "4");
  invalid("threads", "0");
  invalid("mask_res", "20");
  invalid("image_size", "48");
  invalid("alpha", "1.5");
}

TEST(Config, FormatRoundTrips) {
  RunConfig a;
  apply_config_text(a, "pyramid_width=16\nlearning_rate=0.0125\nsrnn_enabled=false\nrun_dir=out/x\n");
  RunConfig b;
  apply_config_text(b, format_config(a, config_keys()));
  EXPECT_EQ(format_config(a, config_keys()), format_config(b, config_keys()));
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "fpnsrnn_ckpt_test";
  fs::remove_all(dir);
  RunConfig cfg;
  apply_config_text(cfg, "pyramid_width=8\nstage_widths=4,4,8,8\nsrnn_rounds=1\n");
  const ParamSet<float> p = init_model(cfg.model, 9);
  save_checkpoint(dir, p, cfg);

  RunConfig loaded;
  const ParamSet<float> q = load_checkpoint(dir, loaded);
  EXPECT_EQ(p, q);
  EXPECT_EQ(loaded.model.extractor.pyramid_width, 8u);
  EXPECT_EQ(loaded.model.extractor.srnn_rounds, 1);
  EXPECT_EQ(format_config(loaded, model_keys()), format_config(cfg, model_keys()));

  const std::string manifest = [&] {
    std::ifstream in(dir / "manifest.txt");
    return std::string(std::istreambuf_iterator<char>(in), {});
  }();
  EXPECT_NE(manifest.find("direction_order = right,left,down,up"), std::string::npos);
  EXPECT_NE(manifest.find("rpn.conv.w = rpn.conv.w.tns 8 8 3 3"), std::string::npos) << manifest;
}

TEST(Checkpoint, MissingOrCorrupt) {
  RunConfig cfg;
  EXPECT_THROW(load_checkpoint(fs::temp_directory_path() / "fpnsrnn_no_such_ckpt", cfg), IoError);
  const fs::path dir = fs::temp_directory_path() / "fpnsrnn_bad_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_archive(dir / "a.tns", Tensor<float>({1, 1, 2, 2}));
  std::ofstream(dir / "manifest.txt") << "a = a.tns 1 1 3 3\n";
  EXPECT_THROW(load_checkpoint(dir, cfg), DataError);
}
