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

#include "fpnsrnn/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace fpnsrnn {

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

}  // namespace

TrainResult train(ParamSet<float> params, const std::vector<Sample>& samples, const ModelConfig& cfg,
                  const TrainOptions& opts, const std::function<void(const StepLog&)>& on_step) {
  TrainResult res;
  if (opts.steps > 0 && samples.empty()) throw std::invalid_argument("train: no samples");
  std::vector<std::vector<Instance>> gts;
  std::vector<Tensor<float>> images;
  for (const auto& s : samples) {
    gts.push_back(instances_from_mask(s.mask));
    images.push_back(image_tensor(s.image));
  }
  ParamSet<float> velocity;
  for (const auto& [k, v] : params) velocity.emplace(k, Tensor<float>(v.shape()));

  Rng rng(opts.seed);
  std::vector<std::size_t> order;
  for (std::size_t step = 0; step < opts.steps; ++step) {
    const std::size_t pos = step % samples.size();
    if (pos == 0) order = epoch_order(samples.size(), rng);
    const std::size_t idx = order[pos];

    Tape<float> tape;
    ParamBinder<float> binder(tape, params);
    StepLog log{step, samples[idx].name, {}, 0.0};
    try {
      const LossVars loss = training_loss(binder, images[idx], gts[idx], cfg);
      log.loss = loss.values;
      if (!std::isfinite(log.loss.total)) throw NumericError("non-finite loss");
      tape.backward(loss.total);
    } catch (const NumericError&) {
      res.diverged = true;
      break;
    }
    const ParamSet<float> grads = binder.grads();

    double sq = 0;
    for (const auto& [k, g] : grads) {
      for (float v : g.vec()) sq += static_cast<double>(v) * v;
    }
    log.grad_norm = std::sqrt(sq);
    if (!std::isfinite(log.grad_norm)) {
      res.diverged = true;
      break;
    }
    const double scale = opts.clip_norm > 0 && log.grad_norm > opts.clip_norm ? opts.clip_norm / log.grad_norm : 1.0;
    const auto mu = static_cast<float>(opts.momentum), lr = static_cast<float>(opts.learning_rate);
    const auto sc = static_cast<float>(scale);
    for (const auto& [k, g] : grads) {
      Tensor<float>& w = params.at(k);
      Tensor<float>& v = velocity.at(k);
      for (std::size_t i = 0; i < w.numel(); ++i) {
        v[i] = mu * v[i] + sc * g[i];
        w[i] -= lr * v[i];
      }
    }
    res.last_finite_step = step;
    if (on_step) on_step(log);
    res.log.push_back(std::move(log));
  }
  res.params = std::move(params);
  return res;
}

std::string loss_csv_header() { return "step,sample,total,objectness,anchor_box,class,bbox,mask,grad_norm"; }

std::string loss_csv_row(const StepLog& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", s.step, s.sample.c_str(), s.loss.total,
                s.loss.objectness, s.loss.anchor_box, s.loss.classification, s.loss.box, s.loss.mask, s.grad_norm);
  return buf;
}

}  // namespace fpnsrnn
