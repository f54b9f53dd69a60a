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
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "fpnsrnn/archive.hpp"
#include "fpnsrnn/checkpoint.hpp"
#include "fpnsrnn/config.hpp"
#include "fpnsrnn/evaluate.hpp"
#include "fpnsrnn/gradcheck_suite.hpp"
#include "fpnsrnn/model.hpp"
#include "fpnsrnn/train.hpp"

namespace fs = std::filesystem;
using namespace fpnsrnn;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct Flags {
  std::string config_file;
  std::map<std::string, std::string> values;
};

void add_config_flags(CLI::App* sub, Flags& flags) {
  sub->add_option("--config", flags.config_file, "key=value file; flags given here override it");
  for (const auto& key : config_keys()) sub->add_option("--" + key, flags.values[key]);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

RunConfig resolve(const CLI::App* sub, const Flags& flags) {
  RunConfig cfg;
  if (!flags.config_file.empty()) apply_config_text(cfg, read_file(flags.config_file));
  for (const auto& key : config_keys()) {
    if (sub->count("--" + key) > 0) apply_setting(cfg, key, flags.values.at(key));
  }
  validate(cfg);
  set_num_threads(cfg.threads);
  set_checked_mode(cfg.checked);
  return cfg;
}

fs::path prepare_run_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.run_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  return dir;
}

void require_path(const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string("config: --") + key + " is required");
}

std::string hex_digest(std::uint64_t d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, d);
  return buf;
}

int cmd_gradcheck(const RunConfig& cfg) {
  const fs::path dir = prepare_run_dir(cfg);
  SuiteOptions opts;
  opts.filter = cfg.ops;
  opts.trials = cfg.trials;
  opts.seed = cfg.seed;
  const SuiteResult r = run_gradcheck_suite(opts, [](const CaseResult& c) {
    SuiteResult one;
    one.cases.push_back(c);
    std::cout << format_suite(one) << std::flush;
  });
  if (r.cases.empty()) throw ConfigError("gradcheck: no case matches ops filter '" + cfg.ops + "'");
  const fs::path report = dir / "gradcheck.txt";
  write_file(report, format_suite(r));
  write_run_manifest(dir, "gradcheck", {report}, cfg);
  std::size_t failed = 0;
  for (const auto& c : r.cases) failed += c.passed() ? 0 : 1;
  std::cout << r.cases.size() - failed << "/" << r.cases.size() << " cases passed\n";
  if (!r.passed) {
    for (const auto& c : r.cases) {
      if (!c.passed()) std::cerr << "gradient check failed: " << c.name << "\n";
    }
    return kExitValidation;
  }
  return 0;
}

Dataset dataset_or_synthetic(const RunConfig& cfg, const fs::path& run_dir) {
  fs::path data = cfg.dataset;
  if (data.empty()) {
    data = run_dir / "data";
    write_synthetic(data, cfg.count, cfg.seed, cfg.image_size);
  } else if (!fs::is_directory(data)) {
    throw IoError("dataset directory " + data.string() + " does not exist");
  }
  Dataset ds = load_dataset(data);
  if (ds.samples.empty()) throw DataError("no image/mask pairs found in " + data.string());
  return ds;
}

int cmd_train_toy(const RunConfig& cfg) {
  const fs::path dir = prepare_run_dir(cfg);
  const Dataset ds = dataset_or_synthetic(cfg, dir);

  const fs::path csv_path = dir / "loss.csv";
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  csv << loss_csv_header() << "\n";

  TrainOptions opts = cfg.train;
  opts.seed = cfg.seed;
  const TrainResult result =
      train(init_model(cfg.model, cfg.seed), ds.samples, cfg.model, opts, [&](const StepLog& s) {
        csv << loss_csv_row(s) << "\n";
        if ((s.step + 1) % 500 == 0) {
          std::fprintf(stderr, "step %zu total %.5f\n", s.step + 1, s.loss.total);
        }
      });
  csv.close();
  if (!csv) throw IoError("cannot write " + csv_path.string());
  if (result.diverged) {
    std::cerr << "training diverged: total loss became non-finite; last finite step " << result.last_finite_step
              << "\n";
    write_run_manifest(dir, "train-toy", {csv_path}, cfg);
    return kExitValidation;
  }

  const fs::path ckpt = cfg.checkpoint.empty() ? dir / "checkpoint" : fs::path(cfg.checkpoint);
  save_checkpoint(ckpt, result.params, cfg);
  const EvalSummary ev = evaluate(result.params, ds.samples, cfg.model, cfg.absent_class_policy);
  const fs::path eval_path = dir / "train_eval.csv";
  write_file(eval_path, eval_csv(ev));
  write_run_manifest(dir, "train-toy", {csv_path, ckpt / "manifest.txt", eval_path}, cfg);
  std::printf("steps %zu  final loss %.6f  training-set dice %.4f\n", result.log.size(),
              result.log.empty() ? 0.0 : result.log.back().loss.total, ev.mean);
  return 0;
}

int cmd_eval(RunConfig cfg) {
  require_path(cfg.checkpoint, "checkpoint");
  require_path(cfg.dataset, "dataset");
  const ParamSet<float> params = load_checkpoint(cfg.checkpoint, cfg);
  validate(cfg);
  if (!fs::is_directory(cfg.dataset)) throw IoError("dataset directory " + cfg.dataset + " does not exist");
  const Dataset ds = load_dataset(cfg.dataset);
  const fs::path dir = prepare_run_dir(cfg);
  EvalSummary ev = evaluate(params, ds.samples, cfg.model, cfg.absent_class_policy);
  ev = summarize(std::move(ev.images), cfg.absent_class_policy, ds.missing_masks);
  const fs::path out = dir / "eval.csv";
  write_file(out, eval_csv(ev));
  write_run_manifest(dir, "eval", {out}, cfg);
  std::printf("images %zu  skipped %zu  mean dice %.6f  pooled dice %.6f\n", ev.images.size(), ev.skipped, ev.mean,
              ev.pooled_mean);
  return 0;
}

int cmd_extract(RunConfig cfg) {
  require_path(cfg.checkpoint, "checkpoint");
  require_path(cfg.image, "image");
  const ParamSet<float> params = load_checkpoint(cfg.checkpoint, cfg);
  validate(cfg);
  const Tensor<float> image = image_tensor(read_png(cfg.image));
  const FeaturePyramid pyr = extract_pyramid(params, image, cfg.model.extractor);
  const fs::path dir = prepare_run_dir(cfg);
  std::vector<fs::path> outputs;
  for (std::size_t k = 0; k < kLevels; ++k) {
    const fs::path p = dir / ("level" + std::to_string(k) + "_stride" + std::to_string(pyr.strides[k]) + ".tns");
    write_archive(p, pyr.levels[k]);
    outputs.push_back(p);
    std::printf("%s %s %s\n", p.filename().c_str(), pyr.levels[k].shape().str().c_str(),
                hex_digest(file_digest(p)).c_str());
  }
  const fs::path props = dir / "proposals.txt";
  write_file(props, format_proposals(image_proposals(params, image, cfg.model)));
  outputs.push_back(props);
  std::printf("%s %s\n", props.filename().c_str(), hex_digest(file_digest(props)).c_str());
  write_run_manifest(dir, "extract", outputs, cfg);
  return 0;
}

int cmd_render(const RunConfig& cfg) {
  require_path(cfg.image, "image");
  require_path(cfg.mask, "mask");
  const Image gray = to_gray(read_png(cfg.image));
  const LabelMask mask = decode_mask(read_png(cfg.mask), default_palette());
  if (mask.h != gray.h || mask.w != gray.w) {
    throw DataError("mask " + cfg.mask + " is " + std::to_string(mask.w) + "x" + std::to_string(mask.h) +
                    " but image is " + std::to_string(gray.w) + "x" + std::to_string(gray.h));
  }
  const fs::path dir = prepare_run_dir(cfg);
  const fs::path out = cfg.output.empty() ? dir / "overlay.png" : fs::path(cfg.output);
  write_png(out, render_overlay(gray, mask, default_palette(), cfg.alpha));
  write_run_manifest(dir, "render", {out}, cfg);
  std::printf("%s\n", out.c_str());
  return 0;
}

int cmd_synth_data(const RunConfig& cfg) {
  const fs::path dir = prepare_run_dir(cfg);
  const fs::path data = cfg.dataset.empty() ? dir / "data" : fs::path(cfg.dataset);
  write_synthetic(data, cfg.count, cfg.seed, cfg.image_size);
  std::vector<fs::path> outputs;
  for (const auto& e : fs::directory_iterator(data)) outputs.push_back(e.path());
  std::sort(outputs.begin(), outputs.end());
  write_run_manifest(dir, "synth-data", outputs, cfg);
  std::printf("wrote %zu samples to %s\n", cfg.count, data.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FPN + spatial RNN organ segmentation toolkit"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    int (*run)(RunConfig);
  };
  const Command commands[] = {
      {"gradcheck", "Run the gradient-check suite", [](RunConfig c) { return cmd_gradcheck(c); }},
      {"train-toy", "Train on a small (synthetic by default) dataset", [](RunConfig c) { return cmd_train_toy(c); }},
      {"eval", "Score a checkpoint on a dataset", [](RunConfig c) { return cmd_eval(std::move(c)); }},
      {"extract", "Write pyramid feature archives and proposals", [](RunConfig c) { return cmd_extract(std::move(c)); }},
      {"render", "Overlay a label mask on an image", [](RunConfig c) { return cmd_render(c); }},
      {"synth-data", "Write synthetic image/mask pairs", [](RunConfig c) { return cmd_synth_data(c); }},
  };
  std::map<std::string, Flags> flags;
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_config_flags(sub, flags[c.name]);
    subs[c.name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitValidation;
  }

  try {
    for (const auto& c : commands) {
      CLI::App* sub = subs.at(c.name);
      if (sub->parsed()) return c.run(resolve(sub, flags.at(c.name)));
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
