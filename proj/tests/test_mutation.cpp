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

#include "fpnsrnn/gradcheck_suite.hpp"

using namespace fpnsrnn;

TEST(Mutation, NegatedConvBackwardFailsNamingConv) {
  SuiteOptions opts;
  opts.filter = "conv2d,relu";
  opts.trials = 2;
  const SuiteResult r = run_gradcheck_suite(opts);
  EXPECT_FALSE(r.passed);
  for (const auto& c : r.cases) {
    if (c.name.find("conv2d") != std::string::npos) {
      EXPECT_FALSE(c.passed()) << c.name;
    } else {
      EXPECT_TRUE(c.passed()) << c.name;
    }
  }
}

TEST(Mutation, CompositesUsingConvFail) {
  SuiteOptions opts;
  opts.filter = "srnn_module";
  opts.trials = 1;
  EXPECT_FALSE(run_gradcheck_suite(opts).passed);
}

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
