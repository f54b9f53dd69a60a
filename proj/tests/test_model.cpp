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

#include "fpnsrnn/evaluate.hpp"
#include "fpnsrnn/model.hpp"
#include "fpnsrnn/train.hpp"

using namespace fpnsrnn;

namespace {

ModelConfig small_model() {
  ModelConfig cfg;
  cfg.extractor.pyramid_width = 8;
  cfg.extractor.backbone.widths = {4, 8, 8, 8};
  cfg.heads.box_hidden = 16;
  cfg.heads.mask_width = 4;
  return cfg;
}

std::vector<Sample> toy_samples(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s = synth_sample(rng);
    s.name = std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST(Proposals, SortedClippedAndCapped) {
  DetectConfig dc;
  dc.proposals_per_level = 5;
  const AnchorGrid grid = anchors_for({1, 1, 64, 64}, dc);
  Rng rng(51);
  std::array<Tensor<double>, kLevels> obj, del;
  for (std::size_t k = 0; k < kLevels; ++k) {
    obj[k] = rng.uniform_tensor<double>({1, 1, grid.levels[k].h, grid.levels[k].w}, -3, 3);
    del[k] = rng.uniform_tensor<double>({1, 4, grid.levels[k].h, grid.levels[k].w}, -2, 2);
  }
  const auto props = propose(grid, obj, del, 64, 64, dc);
  ASSERT_FALSE(props.empty());
  std::array<std::size_t, kLevels> per{};
  for (std::size_t i = 0; i < props.size(); ++i) {
    const Box& b = props[i].box;
    EXPECT_GE(b.x0(), 0.0);
    EXPECT_LE(b.x1(), 64.0);
    EXPECT_GE(b.w, 1.0);
    if (i > 0) EXPECT_GE(props[i - 1].score, props[i].score);
    ++per[props[i].level];
  }
  for (std::size_t n : per) EXPECT_LE(n, 5u);
  const std::string text = format_proposals(props);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), props.size());
}

TEST(Rasterize, HigherScoreWinsAndThresholdApplies) {
  Detection a, b;
  a.cls = kLiver;
  a.score = 0.9;
  a.box = Box::from_corners(0, 0, 8, 8);
  a.mask_res = 2;
  a.mask = {0.9f, 0.9f, 0.9f, 0.9f};
  b = a;
  b.cls = kKidney;
  b.score = 0.6;
  b.box = Box::from_corners(4, 0, 12, 8);
  LabelMask m = rasterize({b, a}, 10, 14, 0.0);
  EXPECT_EQ(m.at(2, 5), kLiver);
  EXPECT_EQ(m.at(2, 10), kKidney);
  EXPECT_EQ(m.at(9, 2), kBackgroundId);
  a.mask = {0.4f, 0.4f, 0.4f, 0.4f};
  m = rasterize({a}, 10, 14, 0.0);
  for (auto v : m.ids) EXPECT_EQ(v, kBackgroundId);
}

TEST(Rasterize, MarginExpandsPastedRegion) {
  EXPECT_DOUBLE_EQ(mask_region({10, 10, 8, 4}, 0.25).w, 10.0);
  Detection d;
  d.cls = kSpleen;
  d.score = 0.8;
  d.box = Box::from_corners(4, 4, 12, 12);
  d.mask_res = 4;
  d.mask.assign(16, 0.9f);
  const LabelMask m = rasterize({d}, 16, 16, 0.5);
  EXPECT_EQ(m.at(2, 8), kSpleen);
  EXPECT_EQ(m.at(0, 8), kBackgroundId);
}

TEST(TrainingLoss, FiniteWithBreakdown) {
  const ModelConfig cfg = small_model();
  const ParamSet<float> p = init_model(cfg, 3);
  const auto samples = toy_samples(1, 3);
  Tape<float> t;
  ParamBinder<float> b(t, p);
  const LossVars lv = training_loss(b, image_tensor(samples[0].image), instances_from_mask(samples[0].mask), cfg);
  const LossBreakdown& v = lv.values;
  EXPECT_TRUE(std::isfinite(v.total));
  EXPECT_NEAR(v.total, v.objectness + v.anchor_box + v.classification + v.box + v.mask, 1e-4);
  EXPECT_GE(v.rois, kNumOrgans);
  EXPECT_GE(v.fg_rois, kNumOrgans);
  EXPECT_EQ(v.mask_rois, std::min<std::size_t>(v.fg_rois, cfg.detect.max_mask_rois));
  t.backward(lv.total);
  for (const auto& [name, g] : b.grads()) EXPECT_TRUE(g.all_finite()) << name;
}

TEST(Train, ZeroStepsReturnsInitialization) {
  const ModelConfig cfg = small_model();
  const ParamSet<float> init = init_model(cfg, 4);
  TrainOptions opts;
  opts.steps = 0;
  const TrainResult r = train(init, toy_samples(2, 4), cfg, opts);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.params, init);
}

TEST(Train, DeterministicAndThreadIndependent) {
  const ModelConfig cfg = small_model();
  const auto samples = toy_samples(2, 5);
  TrainOptions opts;
  opts.steps = 6;
  opts.learning_rate = 0.01;
  const int saved = num_threads();
  set_num_threads(1);
  const TrainResult a = train(init_model(cfg, 5), samples, cfg, opts);
  set_num_threads(3);
  const TrainResult b = train(init_model(cfg, 5), samples, cfg, opts);
  set_num_threads(saved);
  ASSERT_EQ(a.log.size(), 6u);
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(loss_csv_row(a.log[i]), loss_csv_row(b.log[i]));
  EXPECT_EQ(a.params, b.params);
}

TEST(Train, LossDecreasesOnOneImage) {
  const ModelConfig cfg = small_model();
  const auto samples = toy_samples(1, 6);
  TrainOptions opts;
  opts.steps = 60;
  opts.learning_rate = 0.01;
  const TrainResult r = train(init_model(cfg, 6), samples, cfg, opts);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    first += r.log[i].loss.total;
    last += r.log[r.log.size() - 1 - i].loss.total;
  }
  EXPECT_LT(last, 0.8 * first);
}

TEST(Train, DivergenceIsReported) {
  const ModelConfig cfg = small_model();
  TrainOptions opts;
  opts.steps = 50;
  opts.learning_rate = 1e6;
  opts.clip_norm = 0;
  set_checked_mode(false);
  const TrainResult r = train(init_model(cfg, 7), toy_samples(1, 7), cfg, opts);
  set_checked_mode(true);
  EXPECT_TRUE(r.diverged);
  EXPECT_LT(r.last_finite_step, 50u);
}

TEST(Train, CsvFormat) {
  EXPECT_EQ(loss_csv_header(), "step,sample,total,objectness,anchor_box,class,bbox,mask,grad_norm");
  StepLog s;
  s.step = 3;
  s.sample = "007";
  s.loss.total = 1.5;
  EXPECT_EQ(loss_csv_row(s).rfind("3,007,1.5,", 0), 0u);
}

TEST(Evaluate, SummaryAggregations) {
  LabelMask t(1, 4), p(1, 4);
  t.ids = {1, 1, 2, 0};
  p.ids = {1, 0, 2, 0};
  std::vector<ImageEval> rows{{"a", mean_dice(p, t, AbsentClassPolicy::Skip)},
                              {"b", mean_dice(t, t, AbsentClassPolicy::Skip)}};
  const EvalSummary s = summarize(rows, AbsentClassPolicy::Skip, 1);
  EXPECT_EQ(s.skipped, 1u);
  EXPECT_NEAR(s.mean, 0.5 * (rows[0].report.mean + rows[1].report.mean), 1e-15);
  // Pooled liver: both = 1 + 2, sizes 1 + 2 + 2 + 2.
  EXPECT_NEAR(s.pooled[kLiver], 6.0 / (7.0 + kDiceEps), 1e-12);
  const std::string csv = eval_csv(s);
  EXPECT_EQ(csv.rfind("image,liver,kidney,gallbladder,vessels,spleen,mean\n", 0), 0u);
  EXPECT_NE(csv.find("\npooled,"), std::string::npos);
}
