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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpnsrnn/boxes.hpp"
#include "fpnsrnn/rng.hpp"
#include "fpnsrnn/tensor.hpp"

namespace fpnsrnn {

/// Bad input data (unknown colors, mismatched sizes, malformed files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kNumClasses = 6;
inline constexpr std::size_t kNumOrgans = 5;

enum ClassId : std::uint8_t { kBackgroundId = 0, kLiver = 1, kKidney = 2, kGallbladder = 3, kVessels = 4, kSpleen = 5 };

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct PaletteEntry {
  std::uint8_t id = 0;
  std::string name;
  Rgb color;
};

using Palette = std::vector<PaletteEntry>;

const Palette& default_palette();
/// Lines of the form `class <id> <name> <r> <g> <b>`; '#' starts a comment.
Palette parse_palette(const std::string& text);
std::string format_palette(const Palette& palette);

/// Per-pixel class ids, row-major.
struct LabelMask {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> ids;

  LabelMask() = default;
  LabelMask(std::size_t h_, std::size_t w_) : h(h_), w(w_), ids(h_ * w_, 0) {}
  std::uint8_t at(std::size_t i, std::size_t j) const { return ids[i * w + j]; }
  std::uint8_t& at(std::size_t i, std::size_t j) { return ids[i * w + j]; }
  bool operator==(const LabelMask&) const = default;
};

/// 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels.
struct Image {
  std::size_t h = 0, w = 0, channels = 0;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(std::size_t h_, std::size_t w_, std::size_t c_) : h(h_), w(w_), channels(c_), data(h_ * w_ * c_, 0) {}
  std::uint8_t* px(std::size_t i, std::size_t j) { return data.data() + (i * w + j) * channels; }
  const std::uint8_t* px(std::size_t i, std::size_t j) const { return data.data() + (i * w + j) * channels; }
  bool operator==(const Image&) const = default;
};

/// Reads 8- or 16-bit PNGs; alpha is dropped, palettes expanded, 16-bit reduced.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

struct DecodeReport {
  /// Pixels equidistant from two palette colors, resolved to the lower id.
  std::size_t ambiguous = 0;
};

// Nearest palette color by L-infinity distance. Pixels farther than `tol`
// from every color raise DataError listing the offending colors and counts.
LabelMask decode_mask(const Image& rgb, const Palette& palette = default_palette(), int tol = 30,
                      DecodeReport* report = nullptr);
/// Palette-exact RGB rendering of a mask.
Image render_mask(const LabelMask& mask, const Palette& palette = default_palette());
// out = round((1 - alpha) * gray + alpha * color) on labelled pixels;
// background pixels keep their gray value.
Image render_overlay(const Image& gray, const LabelMask& mask, const Palette& palette = default_palette(),
                     double alpha = 0.4);
/// Luma of an RGB image, or a copy of a gray one.
Image to_gray(const Image& img);

inline constexpr double kDiceEps = 1e-6;

enum class AbsentClassPolicy { Zero, Skip };

/// 2 |X_k & Y_k| / (|X_k| + |Y_k| + eps).
double dice_pair(const LabelMask& x, const LabelMask& y, std::uint8_t k, double eps = kDiceEps);

struct ClassDice {
  double dice = 0.0;
  std::size_t x_count = 0, y_count = 0, both = 0;
};

struct DiceReport {
  /// Index 0 is unused; organs are 1..5.
  std::array<ClassDice, kNumClasses> per_class{};
  double mean = 0.0;
  double eps = kDiceEps;
  AbsentClassPolicy policy = AbsentClassPolicy::Zero;
  /// Organs averaged into `mean`.
  std::size_t averaged = 0;
};

// Mean over the five organ classes. Under Zero, a class absent from both
// masks contributes 0; under Skip it is left out (an image with no organs in
// either mask scores 1).
DiceReport mean_dice(const LabelMask& x, const LabelMask& y, AbsentClassPolicy policy = AbsentClassPolicy::Zero,
                     double eps = kDiceEps);

/// Pixel sets of the 8-connected components of class k, in raster order of
/// their first pixel.
std::vector<std::vector<std::size_t>> connected_components(const LabelMask& mask, std::uint8_t k);

struct Histogram {
  std::array<std::size_t, kNumClasses> instances{};
  std::size_t files = 0;
  std::size_t skipped = 0;
};

/// Component counts per class over every mask_*.png in a directory.
Histogram class_histogram(const std::filesystem::path& dir, const Palette& palette = default_palette());

/// One connected organ instance.
struct Instance {
  std::uint8_t cls = 0;
  Box box;
  /// Full-image binary mask (h * w).
  std::vector<std::uint8_t> mask;
};

/// Box from pixel extents: [x_min, x_max + 1) x [y_min, y_max + 1).
std::vector<Instance> instances_from_mask(const LabelMask& mask);

struct Sample {
  std::string name;
  Image image;  // gray
  LabelMask mask;
};

/// Network input (1, 1, h, w) scaled to [0, 1].
Tensor<float> image_tensor(const Image& gray);

/// Speckled 64x64-style scene with all five organs; kidney and spleen share an
/// appearance and differ only in their side relative to the liver.
Sample synth_sample(Rng& rng, std::size_t size = 64);
/// Writes image_NNN.png (gray) and mask_NNN.png (RGB) for `count` samples.
void write_synthetic(const std::filesystem::path& dir, std::size_t count, std::uint64_t seed, std::size_t size = 64);

struct Dataset {
  std::vector<Sample> samples;
  /// Images without a matching mask file.
  std::size_t missing_masks = 0;
};

/// Loads image_*.png with their mask_*.png, sorted by name.
Dataset load_dataset(const std::filesystem::path& dir, const Palette& palette = default_palette());

}  // namespace fpnsrnn
