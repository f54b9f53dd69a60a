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

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fpnsrnn/boxes.hpp"
#include "fpnsrnn/checkpoint.hpp"
#include "fpnsrnn/config.hpp"
#include "fpnsrnn/evaluate.hpp"
#include "fpnsrnn/gradcheck_suite.hpp"
#include "fpnsrnn/losses.hpp"
#include "fpnsrnn/model.hpp"
#include "fpnsrnn/scan.hpp"
#include "fpnsrnn/srnn.hpp"
#include "fpnsrnn/train.hpp"

namespace fs = std::filesystem;
using namespace fpnsrnn;

namespace {

struct Options {
  fs::path cli;
  fs::path work = "acceptance_work";
  fs::path config_dir;
  std::size_t ablation_steps = 1500;
};

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

/// Uniform integer in [lo, hi].
int pick(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run(const std::string& cmd) {
  std::cerr << "+ " << cmd << "\n";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Set-counting Dice: 2|X & Y| / (|X| + |Y| + eps) from explicit pixel sets,
// averaged over the five organs with absent classes scoring 0.
struct OracleDice {
  std::array<double, kNumClasses> per_class{};
  double mean = 0;
};

OracleDice oracle_dice(const LabelMask& pred, const LabelMask& truth, double eps = 1e-6) {
  OracleDice out;
  for (std::uint8_t k = 1; k <= kNumOrgans; ++k) {
    std::set<std::size_t> xs, ys;
    for (std::size_t i = 0; i < pred.ids.size(); ++i) {
      if (pred.ids[i] == k) xs.insert(i);
      if (truth.ids[i] == k) ys.insert(i);
    }
    std::vector<std::size_t> both;
    std::set_intersection(xs.begin(), xs.end(), ys.begin(), ys.end(), std::back_inserter(both));
    out.per_class[k] = 2.0 * static_cast<double>(both.size()) / (static_cast<double>(xs.size() + ys.size()) + eps);
    out.mean += out.per_class[k] / static_cast<double>(kNumOrgans);
  }
  return out;
}

// ---------------------------------------------------------------------------

Verdict gradient_suite(const Options&) {
  SuiteOptions o;
  o.trials = 10;
  const auto t0 = std::chrono::steady_clock::now();
  const SuiteResult r = run_gradcheck_suite(o, [](const CaseResult& c) {
    std::cerr << fmt("  %-28s worst=%.3e failed=%zu\n", c.name.c_str(), c.worst, c.failed_trials);
  });
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string failed;
  for (const auto& c : r.cases) {
    worst = std::max(worst, c.worst);
    if (!c.passed() || c.trials != 10) failed += " " + c.name;
  }
  const std::vector<std::string> required{"srnn_module", "fuse_context", "rpn_head", "box_head",
                                          "mask_head_14", "mask_head_28", "total_loss"};
  for (const auto& name : required) {
    if (std::none_of(r.cases.begin(), r.cases.end(), [&](const CaseResult& c) { return c.name == name; })) {
      failed += " missing:" + name;
    }
  }
  return {failed.empty() && worst <= 1e-4 && secs < 300.0,
          fmt("%zu cases x 10 trials, worst rel err %.3e, %.1f s", r.cases.size(), worst, secs) +
              (failed.empty() ? "" : ", failing:" + failed)};
}

Verdict scan_oracle(const Options&) {
  Rng rng(2024);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Shape s{static_cast<std::size_t>(pick(rng, 1, 2)), static_cast<std::size_t>(pick(rng, 1, 4)),
                  static_cast<std::size_t>(pick(rng, 1, 16)), static_cast<std::size_t>(pick(rng, 1, 16))};
    const auto x = rng.uniform_tensor<double>(s, 0.0, 10.0);
    Tensor<double> eye({s.c, s.c, 1, 1});
    for (std::size_t i = 0; i < s.c; ++i) eye.at(i, i, 0, 0) = 1.0;
    for (Direction d : kAllDirections) {
      const auto y = kernels::irnn_scan(x, eye, d);
      for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
          for (std::size_t i = 0; i < s.h; ++i) {
            for (std::size_t j = 0; j < s.w; ++j) {
              double acc = 0;
              switch (d) {
                case Direction::Right: for (std::size_t k = 0; k <= j; ++k) acc += x.at(n, c, i, k); break;
                case Direction::Left: for (std::size_t k = s.w; k-- > j;) acc += x.at(n, c, i, k); break;
                case Direction::Down: for (std::size_t k = 0; k <= i; ++k) acc += x.at(n, c, k, j); break;
                case Direction::Up: for (std::size_t k = s.h; k-- > i;) acc += x.at(n, c, k, j); break;
              }
              if (y.at(n, c, i, j) != acc) ++mismatches;
            }
          }
        }
      }
    }
  }
  return {mismatches == 0, fmt("100 tensors x 4 directions, %zu inexact elements", mismatches)};
}

Verdict global_context(const Options&) {
  const std::size_t n = 8;
  auto run_module = [&](int rounds, const Tensor<double>& x) {
    ParamSet<double> p;
    for (int r = 0; r < rounds; ++r) {
      const std::string rp = round_prefix("ctx", r);
      p[rp + ".in.w"] = Tensor<double>({1, 1, 1, 1}, 1.0);
      p[rp + ".in.b"] = Tensor<double>({1, 1, 1, 1}, 0.0);
      for (Direction d : kAllDirections) p[whh_name(rp, d)] = Tensor<double>({1, 1, 1, 1}, 1.0);
      p[rp + ".mix.w"] = Tensor<double>({1, 4, 1, 1}, 1.0);
      p[rp + ".mix.b"] = Tensor<double>({1, 1, 1, 1}, 0.0);
    }
    Tape<double> t;
    ParamBinder<double> b(t, p, false);
    return t.value(srnn_module(b, "ctx", t.constant(x), {rounds, 1, 1}));
  };
  Rng rng(8);
  const auto x = rng.uniform_tensor<double>({1, 1, n, n}, 0.1, 1.0);
  std::size_t bad_one = 0, bad_two = 0;
  for (int rounds : {1, 2}) {
    const auto base = run_module(rounds, x);
    for (std::size_t pi = 0; pi < n; ++pi) {
      for (std::size_t pj = 0; pj < n; ++pj) {
        auto xp = x;
        xp.at(0, 0, pi, pj) += 1.0;
        const auto y = run_module(rounds, xp);
        std::size_t changed = 0;
        bool cross_only = true;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            if (y.at(0, 0, i, j) == base.at(0, 0, i, j)) continue;
            ++changed;
            if (i != pi && j != pj) cross_only = false;
          }
        }
        if (rounds == 1 && (changed != 2 * n - 1 || !cross_only)) ++bad_one;
        if (rounds == 2 && changed != n * n) ++bad_two;
      }
    }
  }
  return {bad_one == 0 && bad_two == 0,
          fmt("64 perturbations: rounds=1 off-cross %zu, rounds=2 not global %zu", bad_one, bad_two)};
}

Verdict box_round_trip(const Options&) {
  Rng rng(3);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const Box p{rng.uniform(0, 512), rng.uniform(0, 512), rng.uniform(4, 200), rng.uniform(4, 200)};
    const Box g{rng.uniform(0, 512), rng.uniform(0, 512), rng.uniform(4, 200), rng.uniform(4, 200)};
    const Box r = decode_delta(p, encode_delta(p, g));
    worst = std::max({worst, std::abs(r.x - g.x), std::abs(r.y - g.y), std::abs(r.w - g.w), std::abs(r.h - g.h)});
  }
  return {worst <= 1e-6, fmt("1000 pairs, worst abs error %.3e", worst)};
}

Verdict loss_golden(const Options&) {
  const double half[] = {0.5};
  const int fg[] = {1};
  const double one[] = {1.0};
  const double logits[6] = {0.3, 0.3, 0.3, 0.3, 0.3, 0.3};
  const std::size_t cls[] = {4};
  const double r0[] = {0.5}, r1[] = {2.0};
  const struct {
    const char* name;
    double got, want;
  } rows[] = {
      {"objectness", objectness_loss(half, fg).value, std::log(2.0)},
      {"classification", classification_loss(logits, 6, cls), std::log(6.0)},
      {"mask", mask_loss(half, one), std::log(2.0)},
      {"smooth_l1(0.5)", smooth_l1_loss(r0, 1.0), 0.125},
      {"smooth_l1(2)", smooth_l1_loss(r1, 1.0), 1.5},
  };
  double worst = 0;
  std::string detail;
  for (const auto& r : rows) {
    worst = std::max(worst, std::abs(r.got - r.want));
    detail += fmt("%s=%.12f ", r.name, r.got);
  }
  return {worst <= 1e-9, detail + fmt("max dev %.2e", worst)};
}

LabelMask random_blocks(Rng& rng, std::size_t size) {
  LabelMask m(size, size);
  const int blocks = pick(rng, 0, 12);
  for (int b = 0; b < blocks; ++b) {
    const auto k = static_cast<std::uint8_t>(pick(rng, 0, 5));
    const auto i0 = static_cast<std::size_t>(pick(rng, 0, static_cast<int>(size) - 1));
    const auto j0 = static_cast<std::size_t>(pick(rng, 0, static_cast<int>(size) - 1));
    const auto hh = static_cast<std::size_t>(pick(rng, 1, 16)), ww = static_cast<std::size_t>(pick(rng, 1, 16));
    for (std::size_t i = i0; i < std::min(size, i0 + hh); ++i) {
      for (std::size_t j = j0; j < std::min(size, j0 + ww); ++j) m.at(i, j) = k;
    }
  }
  // Sprinkle noise so masks are not purely rectangular.
  for (auto& v : m.ids) {
    if (rng.uniform() < 0.05) v = static_cast<std::uint8_t>(pick(rng, 0, 5));
  }
  return m;
}

Verdict dice_oracle(const Options&) {
  Rng rng(6);
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    const LabelMask a = random_blocks(rng, 32);
    const LabelMask b = rng.uniform() < 0.2 ? a : random_blocks(rng, 32);
    const DiceReport rep = mean_dice(a, b, AbsentClassPolicy::Zero, 1e-6);
    const OracleDice o = oracle_dice(a, b);
    worst = std::max(worst, std::abs(rep.mean - o.mean));
    for (std::size_t k = 1; k <= kNumOrgans; ++k) worst = std::max(worst, std::abs(rep.per_class[k].dice - o.per_class[k]));
  }
  // Five vertical bands of 6 or 7 columns: every organ covers at least 192 pixels.
  LabelMask bands(32, 32);
  for (std::size_t i = 0; i < 32; ++i) {
    for (std::size_t j = 0; j < 32; ++j) bands.at(i, j) = static_cast<std::uint8_t>(1 + std::min<std::size_t>(j / 6, 4));
  }
  const DiceReport self = mean_dice(bands, bands, AbsentClassPolicy::Zero, 1e-6);
  double lowest = 1.0;
  for (std::size_t k = 1; k <= kNumOrgans; ++k) lowest = std::min(lowest, self.per_class[k].dice);
  return {worst <= 1e-12 && lowest >= 1 - 1e-5 && self.eps == 1e-6,
          fmt("200 pairs, max dev %.2e; perfect match lowest class %.9f", worst, lowest)};
}

// Block means of the total loss over ten equal spans; a later block may exceed
// its predecessor by at most 10 percent and the last must be under half the first.
Verdict loss_trend(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<double> totals;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string step, sample, total;
    std::getline(ss, step, ',');
    std::getline(ss, sample, ',');
    std::getline(ss, total, ',');
    totals.push_back(std::stod(total));
  }
  if (totals.size() < 10) return {false, "loss csv has " + std::to_string(totals.size()) + " rows"};
  const std::size_t span = totals.size() / 10;
  std::vector<double> blocks;
  for (std::size_t b = 0; b < 10; ++b) {
    blocks.push_back(std::accumulate(totals.begin() + b * span, totals.begin() + (b + 1) * span, 0.0) / span);
  }
  bool ok = blocks.back() < 0.5 * blocks.front();
  std::string detail = "block means";
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    detail += fmt(" %.3f", blocks[b]);
    if (b > 0 && blocks[b] > 1.1 * blocks[b - 1]) ok = false;
  }
  return {ok, detail};
}

Verdict toy_overfit(const Options& o) {
  const fs::path dir = o.work / "toy_overfit";
  fs::remove_all(dir);
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = run(quote(o.cli) + " train-toy --config " + quote(o.config_dir / "toy_overfit.cfg") +
                     " --run_dir " + quote(dir));
  const double secs = seconds_since(t0);
  if (rc != 0) return {false, fmt("train-toy exited with %d after %.0f s", rc, secs)};

  RunConfig cfg;
  const ParamSet<float> params = load_checkpoint(dir / "checkpoint", cfg);
  const Dataset ds = load_dataset(dir / "data");
  double dice = 0;
  for (const auto& s : ds.samples) dice += oracle_dice(predict_mask(params, s.image, cfg.model), s.mask).mean;
  dice /= static_cast<double>(ds.samples.size());
  const Verdict trend = loss_trend(dir / "loss.csv");
  const bool ok = ds.samples.size() == 8 && cfg.model.extractor.srnn_enabled && dice >= 0.9 && secs <= 600 && trend.pass;
  return {ok, fmt("%zu images, mean Dice %.4f, %.0f s; ", ds.samples.size(), dice, secs) + trend.detail};
}

Verdict ablation(const Options& o) {
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 7777);
    std::vector<Sample> train_set, held_out;
    for (std::size_t i = 0; i < 48; ++i) (i < 32 ? train_set : held_out).push_back(synth_sample(rng, 64));
    double score[2] = {0, 0};
    for (int with_srnn : {1, 0}) {
      ModelConfig cfg;
      cfg.extractor.srnn_enabled = with_srnn == 1;
      TrainOptions opts;
      opts.steps = o.ablation_steps;
      opts.learning_rate = 0.01;
      opts.seed = seed;
      const TrainResult r = train(init_model(cfg, seed), train_set, cfg, opts);
      score[with_srnn] = r.diverged ? 0.0 : evaluate(r.params, held_out, cfg, AbsentClassPolicy::Zero).mean;
      std::cerr << fmt("  seed %d srnn=%d held-out Dice %.4f\n", static_cast<int>(seed), with_srnn, score[with_srnn]);
    }
    if (score[1] >= score[0]) ++wins;
    detail += fmt(" s%d %.3f/%.3f", static_cast<int>(seed), score[1], score[0]);
  }
  return {wins >= 4, fmt("SRNN on >= off in %zu of 5 seeds (on/off):", wins) + detail};
}

Verdict determinism(const Options& o) {
  const fs::path root = o.work / "determinism";
  fs::remove_all(root);
  const std::string train = quote(o.cli) + " train-toy --count 2 --max_steps 40 --seed 5";
  std::vector<fs::path> runs;
  for (const auto& [name, threads] : std::vector<std::pair<std::string, int>>{{"a", 1}, {"b", 1}, {"c", 4}}) {
    const fs::path dir = root / ("train_" + name);
    if (run(train + " --threads " + std::to_string(threads) + " --run_dir " + quote(dir)) != 0) {
      return {false, "train-toy run " + name + " failed"};
    }
    runs.push_back(dir);
  }
  const fs::path ckpt = runs[0] / "checkpoint", image = runs[0] / "data" / "image_000.png";
  std::vector<fs::path> extracts;
  for (const auto& [name, threads] : std::vector<std::pair<std::string, int>>{{"a", 1}, {"b", 1}, {"c", 4}}) {
    const fs::path dir = root / ("extract_" + name);
    if (run(quote(o.cli) + " extract --checkpoint " + quote(ckpt) + " --image " + quote(image) + " --threads " +
            std::to_string(threads) + " --run_dir " + quote(dir)) != 0) {
      return {false, "extract run " + name + " failed"};
    }
    extracts.push_back(dir);
  }

  // Every archive and CSV (plus the proposal list) must match byte for byte.
  auto artifacts = [](const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".tns" || ext == ".csv" || e.path().filename() == "proposals.txt")) {
        out.push_back(fs::relative(e.path(), dir));
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  std::size_t compared = 0, differing = 0;
  for (const auto* group : {&runs, &extracts}) {
    const auto files = artifacts((*group)[0]);
    for (std::size_t k = 1; k < group->size(); ++k) {
      if (artifacts((*group)[k]) != files) ++differing;
      for (const auto& f : files) {
        ++compared;
        if (slurp((*group)[0] / f) != slurp((*group)[k] / f)) {
          ++differing;
          std::cerr << "  differs: " << ((*group)[k] / f).string() << "\n";
        }
      }
    }
  }
  return {differing == 0 && compared > 0,
          fmt("%zu file comparisons across repeat and 1 vs 4 threads, %zu differing", compared, differing)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  Options o;
  std::vector<int> criteria;
  app.add_option("--criterion", criteria, "Criteria to run (default: all)")->check(CLI::Range(1, 9));
  app.add_option("--cli", o.cli, "Path to the fpnsrnn executable");
  app.add_option("--work", o.work, "Scratch directory");
  app.add_option("--configs", o.config_dir, "Directory holding toy_overfit.cfg");
  app.add_option("--ablation-steps", o.ablation_steps, "Training steps per ablation run");
  CLI11_PARSE(app, argc, argv);
  if (criteria.empty()) criteria = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const std::vector<std::function<Verdict(const Options&)>> checks{
      gradient_suite, scan_oracle, global_context, box_round_trip, loss_golden,
      dice_oracle,    toy_overfit, ablation,       determinism};
  fs::create_directories(o.work);
  bool all = true;
  for (int c : criteria) {
    Verdict v;
    try {
      v = checks[static_cast<std::size_t>(c - 1)](o);
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << c << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << std::endl;
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
