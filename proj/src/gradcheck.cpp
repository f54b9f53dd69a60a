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

#include "fpnsrnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fpnsrnn/ops.hpp"
#include "fpnsrnn/rng.hpp"

namespace fpnsrnn {

namespace {

struct Evaluation {
  double value;
  std::uint64_t kinks;
};

class Objective {
 public:
  Objective(const GradFn& fn, std::uint64_t seed) : fn_(fn), seed_(seed) {}

  Var build(Tape<double>& tape, std::span<const Var> leaves) {
    Var out = fn_(tape, leaves);
    const Tensor<double>& v = tape.value(out);
    if (v.numel() == 1) return out;
    if (projection_.empty()) {
      Rng rng(seed_ ^ 0x5deece66dull);
      projection_ = rng.uniform_tensor<double>(v.shape(), -1.0, 1.0);
    }
    return ops::weighted_sum(tape, out, projection_);
  }

  Evaluation evaluate(const std::vector<Tensor<double>>& inputs) {
    Tape<double> tape;
    tape.set_track_kinks(true);
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.constant(t));
    Var out = build(tape, leaves);
    return {tape.value(out)[0], tape.kink_signature()};
  }

 private:
  const GradFn& fn_;
  std::uint64_t seed_;
  Tensor<double> projection_;
};

}  // namespace

GradCheckReport grad_check(const std::string& op, const GradFn& fn, std::vector<Tensor<double>> inputs,
                           const GradCheckOptions& opts) {
  GradCheckReport report;
  report.op = op;
  report.tolerance = opts.tolerance;
  Objective objective(fn, opts.seed);

  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var> leaves;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const bool frozen = i < opts.frozen.size() && opts.frozen[i];
      leaves.push_back(tape.leaf(inputs[i], !frozen));
    }
    Var out = objective.build(tape, leaves);
    try {
      tape.backward(out);
    } catch (const NumericError& e) {
      throw NumericError("grad_check(" + op + "): " + e.what());
    }
    for (Var v : leaves) {
      const Tensor<double>& g = tape.grad(v);
      analytic.push_back(g.empty() ? Tensor<double>(tape.value(v).shape()) : g);
      if (!analytic.back().all_finite()) throw NumericError("grad_check(" + op + "): non-finite gradient");
    }
  }

  const Evaluation base = objective.evaluate(inputs);
  Rng pick(opts.seed * 7919 + 17);
  report.passed = true;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    double worst = 0.0;
    const bool frozen = i < opts.frozen.size() && opts.frozen[i];
    if (frozen) {
      report.max_rel_error.push_back(0.0);
      continue;
    }
    std::vector<std::size_t> elems(inputs[i].numel());
    std::iota(elems.begin(), elems.end(), 0);
    if (opts.max_elements > 0 && elems.size() > opts.max_elements) {
      for (std::size_t k = 0; k < opts.max_elements; ++k) {
        std::swap(elems[k], elems[k + pick.below(elems.size() - k)]);
      }
      elems.resize(opts.max_elements);
    }
    for (std::size_t e : elems) {
      const double x0 = inputs[i][e];
      double numeric = 0.0;
      bool resolved = false;
      double h = opts.step;
      for (int attempt = 0; attempt < 3 && !resolved; ++attempt, h *= 0.1) {
        inputs[i][e] = x0 + h;
        const Evaluation plus = objective.evaluate(inputs);
        inputs[i][e] = x0 - h;
        const Evaluation minus = objective.evaluate(inputs);
        inputs[i][e] = x0;
        const bool plus_ok = plus.kinks == base.kinks, minus_ok = minus.kinks == base.kinks;
        if (plus_ok && minus_ok) {
          numeric = (plus.value - minus.value) / (2.0 * h);
          resolved = true;
          if (attempt > 0) ++report.kink_fallbacks;
        } else if (plus_ok || minus_ok) {
          // Second-order one-sided difference on the kink-free side.
          const double dir = plus_ok ? 1.0 : -1.0;
          inputs[i][e] = x0 + 2.0 * dir * h;
          const Evaluation far = objective.evaluate(inputs);
          inputs[i][e] = x0;
          if (far.kinks == base.kinks) {
            const double near = plus_ok ? plus.value : minus.value;
            numeric = dir * (-3.0 * base.value + 4.0 * near - far.value) / (2.0 * h);
            resolved = true;
            ++report.kink_fallbacks;
          }
        }
      }
      if (!resolved) {
        ++report.unresolved;
        continue;
      }
      const double err = std::abs(analytic[i][e] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
    report.max_rel_error.push_back(worst);
    report.worst = std::max(report.worst, worst);
  }
  report.passed = report.worst <= opts.tolerance;
  return report;
}

}  // namespace fpnsrnn
