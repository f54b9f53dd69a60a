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

#include "fpnsrnn/evaluate.hpp"

#include <cstdio>

namespace fpnsrnn {

EvalSummary summarize(std::vector<ImageEval> images, AbsentClassPolicy policy, std::size_t skipped) {
  EvalSummary s;
  s.images = std::move(images);
  s.policy = policy;
  s.skipped = skipped;
  std::array<std::size_t, kNumClasses> seen{}, x{}, y{}, both{};
  double mean_sum = 0;
  for (const auto& im : s.images) {
    mean_sum += im.report.mean;
    for (std::size_t k = 1; k <= kNumOrgans; ++k) {
      const ClassDice& c = im.report.per_class[k];
      x[k] += c.x_count;
      y[k] += c.y_count;
      both[k] += c.both;
      if (policy == AbsentClassPolicy::Skip && c.x_count + c.y_count == 0) continue;
      s.class_mean[k] += c.dice;
      ++seen[k];
    }
  }
  const double eps = kDiceEps;
  std::size_t pooled_n = 0;
  double pooled_sum = 0;
  for (std::size_t k = 1; k <= kNumOrgans; ++k) {
    if (seen[k] > 0) s.class_mean[k] /= static_cast<double>(seen[k]);
    s.pooled[k] = 2.0 * static_cast<double>(both[k]) / (static_cast<double>(x[k] + y[k]) + eps);
    if (policy == AbsentClassPolicy::Skip && x[k] + y[k] == 0) continue;
    pooled_sum += s.pooled[k];
    ++pooled_n;
  }
  s.mean = s.images.empty() ? 0.0 : mean_sum / static_cast<double>(s.images.size());
  s.pooled_mean = pooled_n == 0 ? (policy == AbsentClassPolicy::Skip ? 1.0 : 0.0)
                                : pooled_sum / static_cast<double>(pooled_n);
  return s;
}

EvalSummary evaluate(const ParamSet<float>& params, const std::vector<Sample>& samples, const ModelConfig& cfg,
                     AbsentClassPolicy policy) {
  std::vector<ImageEval> rows;
  for (const auto& s : samples) {
    const LabelMask pred = predict_mask(params, s.image, cfg);
    rows.push_back({s.name, mean_dice(pred, s.mask, policy, kDiceEps)});
  }
  return summarize(std::move(rows), policy);
}

std::string eval_csv(const EvalSummary& s) {
  std::string out = "image";
  for (const auto& e : default_palette()) {
    if (e.id != kBackgroundId) out += "," + e.name;
  }
  out += ",mean\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.9f", v);
    out += buf;
  };
  for (const auto& im : s.images) {
    out += im.name;
    for (std::size_t k = 1; k <= kNumOrgans; ++k) num(im.report.per_class[k].dice);
    num(im.report.mean);
    out += "\n";
  }
  out += "mean";
  for (std::size_t k = 1; k <= kNumOrgans; ++k) num(s.class_mean[k]);
  num(s.mean);
  out += "\npooled";
  for (std::size_t k = 1; k <= kNumOrgans; ++k) num(s.pooled[k]);
  num(s.pooled_mean);
  out += "\n";
  return out;
}

}  // namespace fpnsrnn
