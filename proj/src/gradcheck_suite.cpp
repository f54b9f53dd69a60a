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

#include "fpnsrnn/gradcheck_suite.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "fpnsrnn/fpn.hpp"
#include "fpnsrnn/losses.hpp"
#include "fpnsrnn/model.hpp"
#include "fpnsrnn/nn.hpp"
#include "fpnsrnn/ops.hpp"
#include "fpnsrnn/rng.hpp"
#include "fpnsrnn/srnn.hpp"

namespace fpnsrnn {

namespace {

using Leaves = std::span<const Var>;
using Body = std::function<Var(ParamBinder<double>&, Leaves)>;

struct Setup {
  GradFn fn;
  std::vector<Tensor<double>> inputs;
  std::vector<bool> frozen;
  std::size_t max_elements = 0;
};

struct Case {
  std::string name;
  std::function<Setup(Rng&)> make;
};

Tensor<double> rand(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  return rng.uniform_tensor<double>(s, lo, hi);
}

Setup simple(std::vector<Tensor<double>> inputs, GradFn fn) {
  Setup s;
  s.fn = std::move(fn);
  s.inputs = std::move(inputs);
  return s;
}

// Fixed random projection of several outputs down to one scalar. Weights are
// regenerated from the same seed on every call so evaluations agree.
Var reduce_all(Tape<double>& t, std::span<const Var> outs, std::uint64_t seed) {
  std::vector<Var> terms;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    Rng r(seed + 31 * i);
    terms.push_back(ops::weighted_sum(t, outs[i], r.uniform_tensor<double>(t.value(outs[i]).shape(), -1.0, 1.0)));
  }
  return ops::sum_scalars(t, std::span<const Var>(terms));
}

// Differentiates w.r.t. the extra inputs and every parameter the body reads.
// Parameters are jittered so zero biases and identity matrices are generic.
Setup param_case(Rng& rng, const ParamSet<float>& params, std::vector<Tensor<double>> extra, Body body,
                 std::size_t max_elements) {
  ParamSet<double> pd = cast_params<double>(params);
  for (auto& [name, t] : pd) {
    for (double& v : t.vec()) v += rng.uniform(-0.05, 0.05);
  }
  std::vector<std::string> names;
  {
    Tape<double> probe;
    ParamBinder<double> b(probe, pd);
    std::vector<Var> leaves;
    for (const auto& e : extra) leaves.push_back(probe.leaf(e));
    body(b, leaves);
    for (const auto& [name, v] : b.bound()) names.push_back(name);
  }
  Setup s;
  const std::size_t n_extra = extra.size();
  s.inputs = std::move(extra);
  for (const auto& n : names) s.inputs.push_back(pd.at(n));
  s.max_elements = max_elements;
  s.fn = [names, n_extra, body](Tape<double>& t, Leaves leaves) {
    static const ParamSet<double> none;
    ParamBinder<double> b(t, none);
    for (std::size_t k = 0; k < names.size(); ++k) b.bind(names[k], leaves[n_extra + k]);
    return body(b, leaves.first(n_extra));
  };
  return s;
}

Case scan_case(Direction d) {
  return {"irnn_scan_" + std::string(direction_name(d)), [d](Rng& rng) {
            Tensor<double> whh = rand(rng, {3, 3, 1, 1}, -0.3, 0.3);
            for (std::size_t i = 0; i < 3; ++i) whh.at(i, i, 0, 0) += 1.0;
            return simple({rand(rng, {2, 3, 4, 5}), whh},
                          [d](Tape<double>& t, Leaves v) { return ops::irnn_scan(t, v[0], v[1], d); });
          }};
}

ExtractorConfig tiny_extractor(bool srnn) {
  ExtractorConfig c;
  c.backbone.stem_width = 2;
  c.backbone.widths = {3, 3, 4, 4};
  c.pyramid_width = 3;
  c.srnn_enabled = srnn;
  c.srnn_rounds = 2;
  return c;
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.extractor = tiny_extractor(true);
  m.heads.box_hidden = 5;
  m.heads.mask_width = 2;
  m.detect.max_mask_rois = 2;
  return m;
}

std::vector<Case> all_cases() {
  std::vector<Case> c;
  auto conv = [](std::string name, std::size_t k, int stride) {
    return Case{name, [k, stride](Rng& rng) {
                  return simple({rand(rng, {2, 3, 5, 6}), rand(rng, {4, 3, k, k}), rand(rng, {1, 4, 1, 1})},
                                [stride](Tape<double>& t, Leaves v) { return ops::conv2d(t, v[0], v[1], v[2], stride); });
                }};
  };
  c.push_back(conv("conv2d_3x3", 3, 1));
  c.push_back(conv("conv2d_3x3_stride2", 3, 2));
  c.push_back(conv("conv2d_1x1", 1, 1));
  c.push_back({"relu", [](Rng& rng) {
                 return simple({rand(rng, {2, 3, 4, 4})}, [](Tape<double>& t, Leaves v) { return ops::relu(t, v[0]); });
               }});
  c.push_back({"sigmoid", [](Rng& rng) {
                 return simple({rand(rng, {2, 3, 4, 4}, -3, 3)},
                               [](Tape<double>& t, Leaves v) { return ops::sigmoid(t, v[0]); });
               }});
  c.push_back({"softmax_channels", [](Rng& rng) {
                 return simple({rand(rng, {2, 4, 3, 3}, -2, 2)},
                               [](Tape<double>& t, Leaves v) { return ops::softmax_channels(t, v[0]); });
               }});
  c.push_back({"add", [](Rng& rng) {
                 return simple({rand(rng, {2, 3, 4, 4}), rand(rng, {2, 3, 4, 4})},
                               [](Tape<double>& t, Leaves v) { return ops::add(t, v[0], v[1]); });
               }});
  c.push_back({"scale", [](Rng& rng) {
                 return simple({rand(rng, {2, 3, 4, 4})},
                               [](Tape<double>& t, Leaves v) { return ops::scale(t, v[0], 1.7); });
               }});
  c.push_back({"concat_channels", [](Rng& rng) {
                 return simple({rand(rng, {2, 3, 4, 4}), rand(rng, {2, 2, 4, 4})},
                               [](Tape<double>& t, Leaves v) { return ops::concat_channels(t, v); });
               }});
  c.push_back({"slice_channels", [](Rng& rng) {
                 return simple({rand(rng, {2, 5, 3, 3})},
                               [](Tape<double>& t, Leaves v) { return ops::slice_channels(t, v[0], 1, 3); });
               }});
  c.push_back({"upsample2x_nearest", [](Rng& rng) {
                 return simple({rand(rng, {2, 3, 3, 4})},
                               [](Tape<double>& t, Leaves v) { return ops::upsample2x_nearest(t, v[0]); });
               }});
  c.push_back({"maxpool2x2", [](Rng& rng) {
                 return simple({rand(rng, {2, 3, 6, 6})},
                               [](Tape<double>& t, Leaves v) { return ops::maxpool2x2(t, v[0]); });
               }});
  c.push_back({"avgpool2x2", [](Rng& rng) {
                 return simple({rand(rng, {2, 3, 6, 6})},
                               [](Tape<double>& t, Leaves v) { return ops::avgpool2x2(t, v[0]); });
               }});
  c.push_back({"fully_connected", [](Rng& rng) {
                 return simple({rand(rng, {3, 2, 2, 2}), rand(rng, {5, 8, 1, 1}), rand(rng, {1, 5, 1, 1})},
                               [](Tape<double>& t, Leaves v) { return ops::fully_connected(t, v[0], v[1], v[2]); });
               }});
  c.push_back({"channel_l2norm_scale", [](Rng& rng) {
                 return simple({rand(rng, {2, 4, 3, 3}), rand(rng, {1, 4, 1, 1}, 0.5, 2.0)},
                               [](Tape<double>& t, Leaves v) { return ops::channel_l2norm_scale(t, v[0], v[1]); });
               }});
  for (Direction d : kAllDirections) c.push_back(scan_case(d));
  c.push_back({"roi_align", [](Rng& rng) {
                 std::vector<ops::LevelRoi> rois;
                 for (std::size_t r = 0; r < 4; ++r) {
                   const double x0 = rng.uniform(0, 14), y0 = rng.uniform(0, 14);
                   rois.push_back({r % 2, {r % 2, x0, y0, x0 + rng.uniform(4, 18), y0 + rng.uniform(4, 18)}});
                 }
                 return simple({rand(rng, {2, 3, 8, 8}), rand(rng, {2, 3, 4, 4})},
                               [rois](Tape<double>& t, Leaves v) {
                                 static const std::vector<double> strides{4.0, 8.0};
                                 return ops::roi_align(t, v, strides, rois, 3);
                               });
               }});
  c.push_back({"gather_cells", [](Rng& rng) {
                 std::vector<ops::CellRef> cells{{0, 0, 1, 2}, {1, 0, 0, 1}, {0, 0, 1, 2}, {0, 0, 3, 3}};
                 return simple({rand(rng, {1, 3, 4, 4}), rand(rng, {1, 3, 2, 2})},
                               [cells](Tape<double>& t, Leaves v) { return ops::gather_cells(t, v, cells); });
               }});
  c.push_back({"select_channel_group", [](Rng& rng) {
                 return simple({rand(rng, {3, 8, 1, 1})}, [](Tape<double>& t, Leaves v) {
                   static const std::vector<std::size_t> idx{0, 1, 1};
                   return ops::select_channel_group(t, v[0], idx, 4);
                 });
               }});
  c.push_back({"weighted_sum", [](Rng& rng) {
                 Tensor<double> w = rand(rng, {2, 3, 2, 2});
                 return simple({rand(rng, {2, 3, 2, 2})},
                               [w](Tape<double>& t, Leaves v) { return ops::weighted_sum(t, v[0], w); });
               }});
  c.push_back({"sum_scalars", [](Rng& rng) {
                 return simple({rand(rng, {1, 1, 1, 1}), rand(rng, {1, 1, 1, 1}), rand(rng, {1, 1, 1, 1})},
                               [](Tape<double>& t, Leaves v) { return ops::sum_scalars(t, v); });
               }});
  c.push_back({"bce_with_logits", [](Rng& rng) {
                 Tensor<double> y = rand(rng, {2, 1, 3, 3}, 0, 1);
                 for (double& v : y.vec()) v = v > 0.5 ? 1.0 : 0.0;
                 return simple({rand(rng, {2, 1, 3, 3}, -4, 4)},
                               [y](Tape<double>& t, Leaves v) { return ops::bce_with_logits(t, v[0], y); });
               }});
  c.push_back({"softmax_cross_entropy", [](Rng& rng) {
                 std::vector<std::size_t> cls;
                 for (int r = 0; r < 4; ++r) cls.push_back(rng.below(kNumClasses));
                 return simple({rand(rng, {4, kNumClasses, 1, 1}, -3, 3)}, [cls](Tape<double>& t, Leaves v) {
                   return ops::softmax_cross_entropy(t, v[0], cls);
                 });
               }});
  c.push_back({"smooth_l1_loss", [](Rng& rng) {
                 Tensor<double> target = rand(rng, {3, 4, 1, 1});
                 return simple({rand(rng, {3, 4, 1, 1}, -3, 3)}, [target](Tape<double>& t, Leaves v) {
                   return ops::smooth_l1_loss(t, v[0], target, 1.0);
                 });
               }});
  c.push_back({"dense_softmax_cross_entropy", [](Rng& rng) {
                 ParamSet<float> p;
                 nn::init_fc(p, "cls", kNumClasses, 12, rng);
                 std::vector<std::size_t> cls{1, 5, 0};
                 return param_case(rng, p, {rand(rng, {3, 3, 2, 2})},
                                   [cls](ParamBinder<double>& b, Leaves x) {
                                     Var logits = nn::fc(b, "cls", x[0]);
                                     return ops::softmax_cross_entropy(b.tape(), logits, cls);
                                   },
                                   0);
               }});
  c.push_back({"srnn_round", [](Rng& rng) {
                 ParamSet<float> p;
                 init_srnn(p, "s", 2, {1, 3, 2}, rng);
                 return param_case(rng, p, {rand(rng, {1, 2, 5, 6}, 0, 1)},
                                   [](ParamBinder<double>& b, Leaves x) { return srnn_round(b, round_prefix("s", 0), x[0]); },
                                   0);
               }});
  c.push_back({"srnn_module", [](Rng& rng) {
                 ParamSet<float> p;
                 const SrnnConfig cfg{2, 3, 2};
                 init_srnn(p, "s", 2, cfg, rng);
                 return param_case(rng, p, {rand(rng, {1, 2, 6, 6}, 0, 1)},
                                   [cfg](ParamBinder<double>& b, Leaves x) { return srnn_module(b, "s", x[0], cfg); }, 0);
               }});
  c.push_back({"fuse_context", [](Rng& rng) {
                 ParamSet<float> p;
                 init_extractor(p, tiny_extractor(true), rng);
                 return param_case(rng, p, {rand(rng, {1, 3, 4, 4}), rand(rng, {1, 3, 4, 4})},
                                   [](ParamBinder<double>& b, Leaves x) { return fuse_context(b, 1, x[0], x[1]); }, 0);
               }});
  c.push_back({"fuse_context_semantic_only", [](Rng& rng) {
                 ParamSet<float> p;
                 init_extractor(p, tiny_extractor(false), rng);
                 return param_case(rng, p, {rand(rng, {1, 3, 4, 4})},
                                   [](ParamBinder<double>& b, Leaves x) { return fuse_context(b, 2, x[0], Var{}); }, 0);
               }});
  c.push_back({"backbone", [](Rng& rng) {
                 ParamSet<float> p;
                 const ExtractorConfig cfg = tiny_extractor(true);
                 init_extractor(p, cfg, rng);
                 return param_case(rng, p, {rand(rng, {1, 1, 32, 32}, 0, 1)},
                                   [cfg](ParamBinder<double>& b, Leaves x) {
                                     const LevelVars s = backbone_forward(b, x[0], cfg.backbone);
                                     return reduce_all(b.tape(), s, 11);
                                   },
                                   12);
               }});
  c.push_back({"build_pyramid", [](Rng& rng) {
                 ParamSet<float> p;
                 const ExtractorConfig cfg = tiny_extractor(true);
                 init_extractor(p, cfg, rng);
                 const auto& w = cfg.backbone.widths;
                 return param_case(rng, p,
                                   {rand(rng, {1, w[0], 8, 8}), rand(rng, {1, w[1], 4, 4}), rand(rng, {1, w[2], 2, 2}),
                                    rand(rng, {1, w[3], 1, 1})},
                                   [](ParamBinder<double>& b, Leaves x) {
                                     const LevelVars s{x[0], x[1], x[2], x[3]};
                                     return reduce_all(b.tape(), build_pyramid(b, s), 13);
                                   },
                                   0);
               }});
  c.push_back({"extract", [](Rng& rng) {
                 ParamSet<float> p;
                 const ExtractorConfig cfg = tiny_extractor(true);
                 init_extractor(p, cfg, rng);
                 return param_case(rng, p, {rand(rng, {1, 1, 32, 32}, 0, 1)},
                                   [cfg](ParamBinder<double>& b, Leaves x) {
                                     return reduce_all(b.tape(), extract(b, x[0], cfg), 17);
                                   },
                                   12);
               }});
  c.push_back({"rpn_head", [](Rng& rng) {
                 ParamSet<float> p;
                 const ModelConfig cfg = tiny_model();
                 init_heads(p, cfg, rng);
                 const std::size_t w = cfg.extractor.pyramid_width;
                 return param_case(rng, p,
                                   {rand(rng, {1, w, 8, 8}), rand(rng, {1, w, 4, 4}), rand(rng, {1, w, 2, 2}),
                                    rand(rng, {1, w, 1, 1})},
                                   [](ParamBinder<double>& b, Leaves x) {
                                     const RpnVars r = rpn_head(b, LevelVars{x[0], x[1], x[2], x[3]});
                                     std::vector<Var> outs(r.objectness.begin(), r.objectness.end());
                                     outs.insert(outs.end(), r.deltas.begin(), r.deltas.end());
                                     return reduce_all(b.tape(), outs, 19);
                                   },
                                   6);
               }});
  c.push_back({"box_head", [](Rng& rng) {
                 ParamSet<float> p;
                 const ModelConfig cfg = tiny_model();
                 init_heads(p, cfg, rng);
                 const std::size_t w = cfg.extractor.pyramid_width;
                 const auto pool = static_cast<std::size_t>(cfg.heads.box_pool);
                 return param_case(rng, p, {rand(rng, {2, w, pool, pool})},
                                   [](ParamBinder<double>& b, Leaves x) {
                                     const auto [cls, deltas] = box_head(b, x[0]);
                                     const Var outs[] = {cls, deltas};
                                     return reduce_all(b.tape(), outs, 23);
                                   },
                                   8);
               }});
  for (int res : {14, 28}) {
    c.push_back({"mask_head_" + std::to_string(res), [res](Rng& rng) {
                   ParamSet<float> p;
                   ModelConfig cfg = tiny_model();
                   cfg.heads.mask_res = res;
                   init_heads(p, cfg, rng);
                   const std::size_t w = cfg.extractor.pyramid_width;
                   const auto pool = static_cast<std::size_t>(cfg.heads.mask_pool);
                   const HeadConfig heads = cfg.heads;
                   return param_case(rng, p, {rand(rng, {2, w, pool, pool})},
                                     [heads](ParamBinder<double>& b, Leaves x) { return mask_head(b, x[0], heads); }, 8);
                 }});
  }
  c.push_back({"total_loss", [](Rng& rng) {
                 const ModelConfig cfg = tiny_model();
                 ParamSet<float> p = init_model(cfg, rng.next());
                 Tensor<double> image = rand(rng, {1, 1, 32, 32}, 0, 1);
                 Instance inst;
                 inst.cls = static_cast<std::uint8_t>(1 + rng.below(kNumOrgans));
                 inst.mask.assign(32 * 32, 0);
                 for (std::size_t i = 8; i < 24; ++i) {
                   for (std::size_t j = 6; j < 22; ++j) inst.mask[i * 32 + j] = 1;
                 }
                 inst.box = Box::from_corners(6, 8, 22, 24);
                 const std::vector<Instance> gt{inst};
                 const std::vector<Box> rois{inst.box, Box::from_corners(4, 5, 20, 26), Box::from_corners(15, 2, 30, 12)};
                 return param_case(rng, p, {},
                                   [cfg, image, gt, rois](ParamBinder<double>& b, Leaves) {
                                     return training_loss(b, image, gt, cfg, &rois).total;
                                   },
                                   8);
               }});
  return c;
}

bool selected(const std::string& name, const std::string& filter) {
  if (filter.empty()) return true;
  std::istringstream in(filter);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (!part.empty() && name.find(part) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

std::vector<std::string> gradcheck_case_names() {
  std::vector<std::string> out;
  for (const auto& c : all_cases()) out.push_back(c.name);
  return out;
}

SuiteResult run_gradcheck_suite(const SuiteOptions& opts, const std::function<void(const CaseResult&)>& on_case) {
  SuiteResult result;
  const std::vector<Case> cases = all_cases();
  for (std::uint64_t index = 0; index < cases.size(); ++index) {
    const Case& c = cases[index];
    if (!selected(c.name, opts.filter)) continue;
    CaseResult cr;
    cr.name = c.name;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t trial = 0; trial < opts.trials; ++trial) {
      const std::uint64_t seed = opts.seed * 1000003ull + trial * 7919ull + index * 104729ull;
      Rng rng(seed);
      Setup s = c.make(rng);
      GradCheckOptions go;
      go.tolerance = opts.tolerance;
      go.seed = seed;
      go.max_elements = s.max_elements;
      go.frozen = s.frozen;
      const GradCheckReport r = grad_check(c.name, s.fn, std::move(s.inputs), go);
      ++cr.trials;
      if (!r.passed) ++cr.failed_trials;
      cr.worst = std::max(cr.worst, r.worst);
      cr.kink_fallbacks += r.kink_fallbacks;
      cr.unresolved += r.unresolved;
    }
    cr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!cr.passed()) result.passed = false;
    if (on_case) on_case(cr);
    result.cases.push_back(std::move(cr));
  }
  return result;
}

std::string format_suite(const SuiteResult& r) {
  std::string out;
  char buf[256];
  for (const auto& c : r.cases) {
    std::snprintf(buf, sizeof buf, "%-28s max_rel_err=%.3e trials=%zu failed=%zu kinks=%zu %s\n", c.name.c_str(),
                  c.worst, c.trials, c.failed_trials, c.kink_fallbacks, c.passed() ? "PASS" : "FAIL");
    out += buf;
  }
  return out;
}

}  // namespace fpnsrnn
