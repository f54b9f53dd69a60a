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

#include "fpnsrnn/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "fpnsrnn/archive.hpp"

namespace fpnsrnn {

namespace fs = std::filesystem;

const Palette& default_palette() {
  static const Palette p{
      {kBackgroundId, "background", {0, 0, 0}},   {kLiver, "liver", {238, 130, 238}},
      {kKidney, "kidney", {255, 255, 0}},         {kGallbladder, "gallbladder", {0, 128, 0}},
      {kVessels, "vessels", {255, 0, 0}},         {kSpleen, "spleen", {255, 192, 203}},
  };
  return p;
}

Palette parse_palette(const std::string& text) {
  Palette out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    PaletteEntry e;
    int id = 0, r = 0, g = 0, b = 0;
    if (tag != "class" || !(ls >> id >> e.name >> r >> g >> b)) {
      throw DataError("palette line " + std::to_string(lineno) + ": expected 'class <id> <name> <r> <g> <b>'");
    }
    for (int v : {r, g, b}) {
      if (v < 0 || v > 255) throw DataError("palette line " + std::to_string(lineno) + ": color out of range");
    }
    if (id != static_cast<int>(out.size())) {
      throw DataError("palette line " + std::to_string(lineno) + ": ids must be contiguous from 0");
    }
    e.id = static_cast<std::uint8_t>(id);
    e.color = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
    for (const auto& prev : out) {
      if (prev.color == e.color) throw DataError("palette: duplicate color for '" + e.name + "'");
    }
    out.push_back(std::move(e));
  }
  if (out.empty()) throw DataError("palette: no classes");
  return out;
}

std::string format_palette(const Palette& palette) {
  std::ostringstream os;
  for (const auto& e : palette) {
    os << "class " << int(e.id) << ' ' << e.name << ' ' << int(e.color.r) << ' ' << int(e.color.g) << ' '
       << int(e.color.b) << '\n';
  }
  return os.str();
}

Image read_png(const fs::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image img(png.height, png.width, color ? 3 : 1);
  if (!png_image_finish_read(&png, nullptr, img.data.data(), 0, nullptr)) {
    png_image_free(&png);
    throw IoError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  return img;
}

void write_png(const fs::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw DataError("write_png: need 1 or 3 channels");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.w);
  png.height = static_cast<png_uint_32>(img.h);
  png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, img.data.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

LabelMask decode_mask(const Image& rgb, const Palette& palette, int tol, DecodeReport* report) {
  if (rgb.channels != 3) throw DataError("decode_mask: expected an RGB image");
  LabelMask out(rgb.h, rgb.w);
  std::map<std::array<int, 3>, std::size_t> bad;
  std::size_t ambiguous = 0;
  for (std::size_t i = 0; i < rgb.h * rgb.w; ++i) {
    const std::uint8_t* p = rgb.data.data() + 3 * i;
    int best = -1, best_d = 256;
    bool tie = false;
    for (const auto& e : palette) {
      const int d = std::max({std::abs(p[0] - e.color.r), std::abs(p[1] - e.color.g), std::abs(p[2] - e.color.b)});
      if (d < best_d) {
        best_d = d;
        best = e.id;
        tie = false;
      } else if (d == best_d) {
        tie = true;
      }
    }
    if (best_d > tol) {
      ++bad[{p[0], p[1], p[2]}];
      continue;
    }
    if (tie) ++ambiguous;
    out.ids[i] = static_cast<std::uint8_t>(best);
  }
  if (!bad.empty()) {
    std::ostringstream os;
    os << "decode_mask: " << bad.size() << " color(s) not within " << tol << " of any palette entry:";
    std::size_t shown = 0;
    for (const auto& [c, n] : bad) {
      if (shown++ == 8) {
        os << " ...";
        break;
      }
      os << " (" << c[0] << ',' << c[1] << ',' << c[2] << ")x" << n;
    }
    throw DataError(os.str());
  }
  if (report != nullptr) report->ambiguous = ambiguous;
  return out;
}

Image render_mask(const LabelMask& mask, const Palette& palette) {
  Image img(mask.h, mask.w, 3);
  for (std::size_t i = 0; i < mask.ids.size(); ++i) {
    const std::uint8_t id = mask.ids[i];
    if (id >= palette.size()) throw DataError("render_mask: class id " + std::to_string(id) + " not in palette");
    const Rgb c = palette[id].color;
    img.data[3 * i] = c.r;
    img.data[3 * i + 1] = c.g;
    img.data[3 * i + 2] = c.b;
  }
  return img;
}

Image to_gray(const Image& img) {
  if (img.channels == 1) return img;
  Image g(img.h, img.w, 1);
  for (std::size_t i = 0; i < img.h * img.w; ++i) {
    const std::uint8_t* p = img.data.data() + 3 * i;
    g.data[i] = static_cast<std::uint8_t>((299 * p[0] + 587 * p[1] + 114 * p[2] + 500) / 1000);
  }
  return g;
}

Image render_overlay(const Image& gray_in, const LabelMask& mask, const Palette& palette, double alpha) {
  if (gray_in.h != mask.h || gray_in.w != mask.w) {
    throw DataError("render_overlay: image " + std::to_string(gray_in.h) + "x" + std::to_string(gray_in.w) +
                    " does not match mask " + std::to_string(mask.h) + "x" + std::to_string(mask.w));
  }
  if (!(alpha >= 0 && alpha <= 1)) throw DataError("render_overlay: alpha must be in [0, 1]");
  const Image gray = to_gray(gray_in);
  Image out(gray.h, gray.w, 3);
  for (std::size_t i = 0; i < mask.ids.size(); ++i) {
    const double g = gray.data[i];
    std::uint8_t* o = out.data.data() + 3 * i;
    const std::uint8_t id = mask.ids[i];
    if (id == kBackgroundId) {
      o[0] = o[1] = o[2] = gray.data[i];
      continue;
    }
    if (id >= palette.size()) throw DataError("render_overlay: class id " + std::to_string(id) + " not in palette");
    const Rgb c = palette[id].color;
    auto blend = [&](double v) { return static_cast<std::uint8_t>(std::lround((1.0 - alpha) * g + alpha * v)); };
    o[0] = blend(c.r);
    o[1] = blend(c.g);
    o[2] = blend(c.b);
  }
  return out;
}

namespace {

void require_same_dims(const LabelMask& x, const LabelMask& y, const char* what) {
  if (x.h != y.h || x.w != y.w) {
    throw DataError(std::string(what) + ": masks differ in size (" + std::to_string(x.h) + "x" + std::to_string(x.w) +
                    " vs " + std::to_string(y.h) + "x" + std::to_string(y.w) + ")");
  }
}

ClassDice count_class(const LabelMask& x, const LabelMask& y, std::uint8_t k, double eps) {
  ClassDice c;
  for (std::size_t i = 0; i < x.ids.size(); ++i) {
    const bool a = x.ids[i] == k, b = y.ids[i] == k;
    c.x_count += a;
    c.y_count += b;
    c.both += a && b;
  }
  c.dice = 2.0 * static_cast<double>(c.both) / (static_cast<double>(c.x_count + c.y_count) + eps);
  return c;
}

}  // namespace

double dice_pair(const LabelMask& x, const LabelMask& y, std::uint8_t k, double eps) {
  require_same_dims(x, y, "dice_pair");
  return count_class(x, y, k, eps).dice;
}

DiceReport mean_dice(const LabelMask& x, const LabelMask& y, AbsentClassPolicy policy, double eps) {
  require_same_dims(x, y, "mean_dice");
  DiceReport r;
  r.eps = eps;
  r.policy = policy;
  double sum = 0;
  for (std::uint8_t k = 1; k <= kNumOrgans; ++k) {
    r.per_class[k] = count_class(x, y, k, eps);
    const bool present = r.per_class[k].x_count + r.per_class[k].y_count > 0;
    if (policy == AbsentClassPolicy::Skip && !present) continue;
    sum += r.per_class[k].dice;
    ++r.averaged;
  }
  r.mean = r.averaged == 0 ? 1.0 : sum / static_cast<double>(r.averaged);
  return r;
}

std::vector<std::vector<std::size_t>> connected_components(const LabelMask& mask, std::uint8_t k) {
  std::vector<std::vector<std::size_t>> comps;
  std::vector<std::uint8_t> seen(mask.ids.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.ids.size(); ++start) {
    if (mask.ids[start] != k || seen[start]) continue;
    std::vector<std::size_t> comp;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      comp.push_back(p);
      const auto i = static_cast<std::ptrdiff_t>(p / mask.w), j = static_cast<std::ptrdiff_t>(p % mask.w);
      for (std::ptrdiff_t di = -1; di <= 1; ++di) {
        for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
          const std::ptrdiff_t ni = i + di, nj = j + dj;
          if (ni < 0 || nj < 0 || ni >= static_cast<std::ptrdiff_t>(mask.h) || nj >= static_cast<std::ptrdiff_t>(mask.w)) {
            continue;
          }
          const std::size_t q = static_cast<std::size_t>(ni) * mask.w + static_cast<std::size_t>(nj);
          if (mask.ids[q] == k && !seen[q]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    comps.push_back(std::move(comp));
  }
  return comps;
}

namespace {

std::vector<fs::path> sorted_matches(const fs::path& dir, const std::string& prefix) {
  std::vector<fs::path> out;
  std::error_code ec;
  fs::directory_iterator it(dir, ec);
  if (ec) throw IoError("cannot list directory " + dir.string() + ": " + ec.message());
  for (const auto& e : it) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind(prefix, 0) == 0 && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Histogram class_histogram(const fs::path& dir, const Palette& palette) {
  Histogram h;
  for (const auto& path : sorted_matches(dir, "mask_")) {
    try {
      const LabelMask m = decode_mask(read_png(path), palette);
      for (std::uint8_t k = 1; k < kNumClasses && k < palette.size(); ++k) {
        h.instances[k] += connected_components(m, k).size();
      }
      ++h.files;
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << path.string() << ": " << e.what() << '\n';
      ++h.skipped;
    }
  }
  return h;
}

std::vector<Instance> instances_from_mask(const LabelMask& mask) {
  std::vector<Instance> out;
  for (std::uint8_t k = 1; k < kNumClasses; ++k) {
    for (const auto& comp : connected_components(mask, k)) {
      Instance inst;
      inst.cls = k;
      inst.mask.assign(mask.ids.size(), 0);
      std::size_t y0 = mask.h, y1 = 0, x0 = mask.w, x1 = 0;
      for (std::size_t p : comp) {
        inst.mask[p] = 1;
        const std::size_t i = p / mask.w, j = p % mask.w;
        y0 = std::min(y0, i);
        y1 = std::max(y1, i);
        x0 = std::min(x0, j);
        x1 = std::max(x1, j);
      }
      inst.box = Box::from_corners(static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 + 1),
                                   static_cast<double>(y1 + 1));
      out.push_back(std::move(inst));
    }
  }
  return out;
}

Tensor<float> image_tensor(const Image& img) {
  const Image gray = to_gray(img);
  Tensor<float> t({1, 1, gray.h, gray.w});
  for (std::size_t i = 0; i < gray.data.size(); ++i) t[i] = static_cast<float>(gray.data[i]) / 255.0f;
  return t;
}

namespace {

struct OrganTemplate {
  std::uint8_t cls;
  double cx, cy, rx, ry;
  double intensity;
};

// Layout on a 64 x 64 canvas with the liver on the left. Kidney and spleen
// share an intensity; only their side relative to the liver separates them.
constexpr std::array<OrganTemplate, kNumOrgans> kTemplates{{
    {kLiver, 19, 18, 15, 11, 165},
    {kGallbladder, 42, 25, 6, 5, 22},
    {kKidney, 17, 45, 9, 7, 110},
    {kSpleen, 47, 45, 9, 7, 110},
    {kVessels, 47, 9, 12, 4, 40},
}};

constexpr double kBackgroundLevel = 60;

}  // namespace

Sample synth_sample(Rng& rng, std::size_t size) {
  const double scale = static_cast<double>(size) / 64.0;
  const bool mirror = rng.uniform() < 0.5;
  Sample s;
  s.mask = LabelMask(size, size);
  std::array<double, kNumClasses> level{};
  level[kBackgroundId] = kBackgroundLevel;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 200) throw DataError("synth_sample: could not place organs without overlap");
    LabelMask m(size, size);
    bool ok = true;
    for (const auto& t : kTemplates) {
      double cx = (t.cx + rng.uniform(-3, 3)) * scale;
      const double cy = (t.cy + rng.uniform(-3, 3)) * scale;
      const double rx = t.rx * rng.uniform(0.85, 1.15) * scale;
      const double ry = t.ry * rng.uniform(0.85, 1.15) * scale;
      const double angle = rng.uniform(-0.3, 0.3);
      if (mirror) cx = static_cast<double>(size) - cx;
      level[t.cls] = t.intensity;
      const double ca = std::cos(angle), sa = std::sin(angle);
      for (std::size_t i = 0; i < size && ok; ++i) {
        for (std::size_t j = 0; j < size; ++j) {
          const double dx = static_cast<double>(j) + 0.5 - cx, dy = static_cast<double>(i) + 0.5 - cy;
          const double u = (ca * dx + sa * dy) / rx, v = (-sa * dx + ca * dy) / ry;
          if (u * u + v * v > 1.0) continue;
          const bool edge = i == 0 || j == 0 || i + 1 == size || j + 1 == size;
          if (m.at(i, j) != kBackgroundId || edge) {
            ok = false;
            break;
          }
          m.at(i, j) = t.cls;
        }
      }
      if (!ok) break;
    }
    if (ok) {
      s.mask = std::move(m);
      break;
    }
  }
  s.image = Image(size, size, 1);
  for (std::size_t i = 0; i < size * size; ++i) {
    const double base = level[s.mask.ids[i]];
    const double v = base * (1.0 + 0.3 * rng.normal());
    s.image.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
  }
  return s;
}

void write_synthetic(const fs::path& dir, std::size_t count, std::uint64_t seed, std::size_t size) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const Sample s = synth_sample(rng, size);
    char stem[32];
    std::snprintf(stem, sizeof stem, "%03zu.png", i);
    write_png(dir / ("image_" + std::string(stem)), s.image);
    write_png(dir / ("mask_" + std::string(stem)), render_mask(s.mask));
  }
}

Dataset load_dataset(const fs::path& dir, const Palette& palette) {
  Dataset ds;
  for (const auto& img_path : sorted_matches(dir, "image_")) {
    const std::string suffix = img_path.filename().string().substr(6);
    const fs::path mask_path = img_path.parent_path() / ("mask_" + suffix);
    if (!fs::exists(mask_path)) {
      ++ds.missing_masks;
      continue;
    }
    Sample s;
    s.name = img_path.stem().string().substr(6);
    s.image = to_gray(read_png(img_path));
    s.mask = decode_mask(read_png(mask_path), palette);
    if (s.mask.h != s.image.h || s.mask.w != s.image.w) {
      throw DataError("mask " + mask_path.string() + " does not match its image size");
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace fpnsrnn
