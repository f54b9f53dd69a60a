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

#include <cmath>
#include <filesystem>
#include <limits>

#include "fpnsrnn/archive.hpp"
#include "fpnsrnn/autograd.hpp"
#include "fpnsrnn/ops.hpp"
#include "fpnsrnn/rng.hpp"

using namespace fpnsrnn;

TEST(Tensor, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensor<float>(Shape{1, 2, 3, 4}, std::vector<float>(23)), ShapeError);
  Tensor<float> t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.numel(), 120u);
  EXPECT_EQ(t.index(1, 2, 3, 4), 119u);
}

TEST(Tensor, ShapeErrorNamesBothShapes) {
  try {
    require_same_shape({1, 2, 3, 4}, {1, 2, 3, 5}, "add");
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(1, 2, 3, 4)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(1, 2, 3, 5)"), std::string::npos) << msg;
  }
}

TEST(Archive, RoundTripsBothDtypes) {
  Rng rng(3);
  const auto f = rng.uniform_tensor<float>({2, 3, 4, 5}, -10, 10);
  const auto d = rng.uniform_tensor<double>({1, 1, 7, 3}, -10, 10);
  EXPECT_EQ(decode_archive<float>(encode_archive(f)), f);
  EXPECT_EQ(decode_archive<double>(encode_archive(d)), d);
  // f32 widens exactly.
  EXPECT_EQ(decode_archive<double>(encode_archive(f)), f.cast<double>());
}

TEST(Archive, HeaderLayout) {
  Tensor<float> t({1, 2, 1, 1}, std::vector<float>{1.0f, -2.0f});
  const auto bytes = encode_archive(t);
  ASSERT_EQ(bytes.size(), 4u + 1u + 16u + 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "TNS4");
  EXPECT_EQ(bytes[4], 0);
  EXPECT_EQ(bytes[5], 1);
  EXPECT_EQ(bytes[9], 2);
  // 1.0f little-endian.
  EXPECT_EQ(bytes[21], 0x00);
  EXPECT_EQ(bytes[24], 0x3f);
  EXPECT_EQ(encode_archive(t.cast<double>())[4], 1);
}

TEST(Archive, RejectsCorruptInput) {
  Tensor<float> t({1, 1, 2, 2}, 1.0f);
  auto bytes = encode_archive(t);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_archive<float>(bad_magic), IoError);
  auto bad_tag = bytes;
  bad_tag[4] = 7;
  EXPECT_THROW(decode_archive<float>(bad_tag), IoError);
  bytes.pop_back();
  EXPECT_THROW(decode_archive<float>(bytes), IoError);
}

TEST(Archive, FileRoundTripAndDigest) {
  const auto dir = std::filesystem::temp_directory_path() / "fpnsrnn_archive_test";
  std::filesystem::create_directories(dir);
  Rng rng(9);
  const auto t = rng.uniform_tensor<float>({1, 4, 3, 3}, 0, 1);
  write_archive(dir / "a.tns", t);
  write_archive(dir / "b.tns", t);
  EXPECT_EQ(read_archive<float>(dir / "a.tns"), t);
  EXPECT_EQ(file_digest(dir / "a.tns"), file_digest(dir / "b.tns"));
  EXPECT_THROW(read_archive<float>(dir / "missing.tns"), IoError);
}

TEST(Archive, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ull);
  const std::uint8_t a[] = {'a'};
  EXPECT_EQ(fnv1a64(a), 0xaf63dc4c8601ec8cull);
}

TEST(CheckedMode, NonFiniteOpOutputThrows) {
  ASSERT_TRUE(checked_mode());
  Tape<float> t;
  Var x = t.leaf(Tensor<float>({1, 1, 1, 2}, std::vector<float>{1.0f, std::numeric_limits<float>::infinity()}));
  EXPECT_THROW(ops::relu(t, x), NumericError);
  set_checked_mode(false);
  EXPECT_NO_THROW(ops::relu(t, x));
  set_checked_mode(true);
}

TEST(Tape, GradientsAccumulateAcrossUses) {
  Tape<double> t;
  Var x = t.leaf(Tensor<double>({1, 1, 1, 3}, std::vector<double>{1, -2, 3}));
  Var y = ops::add(t, x, x);
  Var s = ops::weighted_sum(t, y, Tensor<double>({1, 1, 1, 3}, std::vector<double>{1, 1, 1}));
  t.backward(s);
  for (double g : t.grad(x).vec()) EXPECT_EQ(g, 2.0);
  EXPECT_EQ(t.grad(x).shape(), t.value(x).shape());
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape<double> t;
  Var c = t.constant(Tensor<double>({1, 1, 1, 1}, 2.0));
  Var x = t.leaf(Tensor<double>({1, 1, 1, 1}, 3.0));
  const Var parts[] = {c, x};
  t.backward(ops::sum_scalars(t, std::span<const Var>(parts)));
  EXPECT_TRUE(t.grad(c).empty());
  EXPECT_EQ(t.grad(x)[0], 1.0);
}
