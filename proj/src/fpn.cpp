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

#include "fpnsrnn/fpn.hpp"

#include "fpnsrnn/nn.hpp"
#include "fpnsrnn/ops.hpp"

namespace fpnsrnn {

namespace {

std::string stage_name(std::size_t k) { return "backbone.s" + std::to_string(k); }

SrnnConfig level_srnn(const ExtractorConfig& cfg, std::size_t level) {
  return {cfg.srnn_rounds, cfg.backbone.widths[level], cfg.pyramid_width};
}

}  // namespace

std::string lateral_name(std::size_t level) { return "fpn.lat" + std::to_string(level); }
std::string srnn_prefix(std::size_t level) { return "fpn.srnn" + std::to_string(level); }
std::string gamma_name(std::size_t level) { return "fpn.gamma" + std::to_string(level); }
std::string compress_name(std::size_t level) { return "fpn.compress" + std::to_string(level); }

void init_extractor(ParamSet<float>& params, const ExtractorConfig& cfg, Rng& rng) {
  const BackboneConfig& b = cfg.backbone;
  const std::size_t pw = cfg.pyramid_width;
  if (pw == 0 || b.in_channels == 0 || b.stem_width == 0) throw std::invalid_argument("extractor: widths must be positive");
  nn::init_conv(params, "backbone.stem", b.stem_width, b.in_channels, 3, rng);
  std::size_t in = b.stem_width;
  for (std::size_t k = 0; k < kLevels; ++k) {
    const std::size_t w = b.widths[k];
    if (w == 0) throw std::invalid_argument("extractor: stage widths must be positive");
    nn::init_conv(params, stage_name(k) + ".down", w, in, 3, rng);
    nn::init_conv(params, stage_name(k) + ".res1", w, w, 3, rng);
    nn::init_conv(params, stage_name(k) + ".res2", w, w, 3, rng);
    in = w;
  }
  for (std::size_t k = 0; k < kLevels; ++k) {
    nn::init_conv(params, lateral_name(k), pw, b.widths[k], 1, rng);
    std::size_t fused = pw;
    if (cfg.srnn_enabled) {
      init_srnn(params, srnn_prefix(k), b.widths[k], level_srnn(cfg, k), rng);
      fused += pw;
    }
    params[gamma_name(k)] = Tensor<float>({1, fused, 1, 1}, 1.0f);
    nn::init_conv(params, compress_name(k), pw, fused, 1, rng);
  }
}

void require_padded(const Shape& image) {
  if (image.h % 32 != 0 || image.w % 32 != 0 || image.h == 0 || image.w == 0) {
    throw ShapeError("input " + image.str() + " must have height and width divisible by 32; pad the image first");
  }
}

template <typename T>
LevelVars backbone_forward(ParamBinder<T>& p, Var image, const BackboneConfig& cfg) {
  Tape<T>& t = p.tape();
  require_padded(t.value(image).shape());
  if (t.value(image).shape().c != cfg.in_channels) {
    throw ShapeError("backbone expects " + std::to_string(cfg.in_channels) + " input channels, got " +
                     t.value(image).shape().str());
  }
  Var x = ops::maxpool2x2(t, nn::conv_relu(p, "backbone.stem", image));
  LevelVars stages;
  for (std::size_t k = 0; k < kLevels; ++k) {
    const std::string s = stage_name(k);
    x = nn::conv_relu(p, s + ".down", x, 2);
    const Var inner = nn::conv(p, s + ".res2", nn::conv_relu(p, s + ".res1", x));
    x = ops::relu(t, ops::add(t, x, inner));
    stages[k] = x;
  }
  return stages;
}

template <typename T>
LevelVars build_pyramid(ParamBinder<T>& p, const LevelVars& stages) {
  Tape<T>& t = p.tape();
  LevelVars out;
  out[kLevels - 1] = nn::conv(p, lateral_name(kLevels - 1), stages[kLevels - 1]);
  for (std::size_t k = kLevels - 1; k-- > 0;) {
    const Var lat = nn::conv(p, lateral_name(k), stages[k]);
    const Var up = ops::upsample2x_nearest(t, out[k + 1]);
    try {
      out[k] = ops::add(t, lat, up);
    } catch (const ShapeError& e) {
      throw ShapeError("pyramid level " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
Var fuse_context(ParamBinder<T>& p, std::size_t level, Var semantic, Var context) {
  Tape<T>& t = p.tape();
  Var joined = semantic;
  if (context.valid()) {
    const std::array<Var, 2> parts{semantic, context};
    joined = ops::concat_channels(t, std::span<const Var>(parts));
  }
  const Var normed = ops::channel_l2norm_scale(t, joined, p(gamma_name(level)));
  return nn::conv(p, compress_name(level), normed);
}

template <typename T>
LevelVars extract(ParamBinder<T>& p, Var image, const ExtractorConfig& cfg) {
  const LevelVars stages = backbone_forward(p, image, cfg.backbone);
  const LevelVars semantic = build_pyramid(p, stages);
  LevelVars out;
  for (std::size_t k = 0; k < kLevels; ++k) {
    try {
      Var context;
      if (cfg.srnn_enabled) context = srnn_module(p, srnn_prefix(k), stages[k], level_srnn(cfg, k));
      out[k] = fuse_context(p, k, semantic[k], context);
    } catch (const ShapeError& e) {
      throw ShapeError("pyramid level " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

FeaturePyramid extract_pyramid(const ParamSet<float>& params, const Tensor<float>& image, const ExtractorConfig& cfg) {
  Tape<float> tape;
  ParamBinder<float> p(tape, params, false);
  const LevelVars levels = extract(p, tape.constant(image), cfg);
  FeaturePyramid out;
  for (std::size_t k = 0; k < kLevels; ++k) out.levels[k] = tape.value(levels[k]);
  return out;
}

template LevelVars backbone_forward(ParamBinder<float>&, Var, const BackboneConfig&);
template LevelVars backbone_forward(ParamBinder<double>&, Var, const BackboneConfig&);
template LevelVars build_pyramid(ParamBinder<float>&, const LevelVars&);
template LevelVars build_pyramid(ParamBinder<double>&, const LevelVars&);
template Var fuse_context(ParamBinder<float>&, std::size_t, Var, Var);
template Var fuse_context(ParamBinder<double>&, std::size_t, Var, Var);
template LevelVars extract(ParamBinder<float>&, Var, const ExtractorConfig&);
template LevelVars extract(ParamBinder<double>&, Var, const ExtractorConfig&);

}  // namespace fpnsrnn
