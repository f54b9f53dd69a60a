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

#include "fpnsrnn/gradcheck.hpp"
#include "fpnsrnn/gradcheck_suite.hpp"
#include "fpnsrnn/ops.hpp"

using namespace fpnsrnn;

TEST(GradCheck, DetectsWrongGradient) {
  // y = x * 2 recorded with a backward that claims dy/dx = 3.
  const GradFn wrong = [](Tape<double>& t, std::span<const Var> in) {
    const Var x = in[0];
    return t.record("wrong", Tensor<double>(t.value(x).shape(), 2.0 * t.value(x)[0]), {x},
                    [x](Tape<double>& tp, const Tensor<double>& gy, const Tensor<double>&) {
                      tp.grad_buffer(x)[0] += 3.0 * gy[0];
                    });
  };
  const GradCheckReport r = grad_check("wrong", wrong, {Tensor<double>({1, 1, 1, 1}, 0.7)});
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.worst, 1.0 / 2.0, 1e-6);
}

TEST(GradCheck, KinkFallbackAtRelu) {
  // Evaluated exactly at a ReLU kink: only one-sided differences are valid.
  const GradFn fn = [](Tape<double>& t, std::span<const Var> in) { return ops::relu(t, in[0]); };
  const GradCheckReport r = grad_check("relu_kink", fn, {Tensor<double>({1, 1, 1, 2}, std::vector<double>{0.0, 1e-7})});
  EXPECT_TRUE(r.passed) << r.worst;
  EXPECT_GT(r.kink_fallbacks, 0u);
}

TEST(GradCheck, NonFiniteGradientThrowsNamingOp) {
  const GradFn fn = [](Tape<double>& t, std::span<const Var> in) {
    const Var x = in[0];
    return t.record("bad_op", t.value(x), {x}, [x](Tape<double>& tp, const Tensor<double>&, const Tensor<double>&) {
      tp.grad_buffer(x)[0] = std::nan("");
    });
  };
  try {
    grad_check("bad_op", fn, {Tensor<double>({1, 1, 1, 1}, 1.0)});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("bad_op"), std::string::npos);
  }
}

TEST(GradCheck, FrozenInputsSkipped) {
  const GradFn fn = [](Tape<double>& t, std::span<const Var> in) { return ops::add(t, in[0], in[1]); };
  GradCheckOptions o;
  o.frozen = {false, true};
  const GradCheckReport r = grad_check("add", fn, {Tensor<double>({1, 1, 2, 2}, 1.0), Tensor<double>({1, 1, 2, 2}, 2.0)}, o);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.max_rel_error.size(), 2u);
}

TEST(Suite, CoversEveryOpAndComposite) {
  const auto names = gradcheck_case_names();
  for (const char* want : {"conv2d_3x3", "relu", "sigmoid", "softmax_channels", "add", "scale", "concat_channels",
                           "slice_channels", "upsample2x_nearest", "maxpool2x2", "avgpool2x2", "fully_connected",
                           "channel_l2norm_scale", "irnn_scan_right", "irnn_scan_left", "irnn_scan_down",
                           "irnn_scan_up", "roi_align", "gather_cells", "select_channel_group", "weighted_sum",
                           "sum_scalars", "bce_with_logits", "softmax_cross_entropy", "smooth_l1_loss", "srnn_module",
                           "fuse_context", "backbone", "extract", "rpn_head", "box_head", "mask_head_14",
                           "total_loss"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), want), names.end()) << want;
  }
}

TEST(Suite, FilterSelectsAndEmptyRunsAll) {
  SuiteOptions o;
  o.trials = 1;
  o.filter = "relu,sum_scalars";
  const SuiteResult r = run_gradcheck_suite(o);
  ASSERT_EQ(r.cases.size(), 2u);
  EXPECT_TRUE(r.passed);
  o.filter = "nothing_matches";
  EXPECT_TRUE(run_gradcheck_suite(o).cases.empty());
}

TEST(Suite, OpsPassThreeTrials) {
  SuiteOptions o;
  o.trials = 3;
  o.filter = "conv2d,relu,sigmoid,softmax,pool,upsample,fully,l2norm,irnn,roi_align,gather,select,bce,smooth";
  const SuiteResult r = run_gradcheck_suite(o);
  EXPECT_TRUE(r.passed) << format_suite(r);
}
