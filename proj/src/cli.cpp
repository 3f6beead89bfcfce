/* Copyright 2026 The BCPNet Engine Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "bcpnet/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "bcpnet/autograd.hpp"
#include "bcpnet/bench.hpp"
#include "bcpnet/complexity.hpp"
#include "bcpnet/modelio.hpp"
#include "bcpnet/train.hpp"

namespace bcpnet {
namespace {

constexpr double kGradTolerance = 1e-4;

struct Common {
  std::string config;
  std::string weights;
  std::string out;
  std::vector<std::string> res;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> classes;
};

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.train.seed = *c.seed;
  if (c.classes) {
    cfg.model.num_classes = *c.classes;
    cfg.validate();
  }
  return cfg;
}

std::vector<Resolution> resolutions(const Common& c, std::vector<Resolution> fallback) {
  if (c.res.empty()) return fallback;
  std::vector<Resolution> out;
  for (const auto& r : c.res) out.push_back(parse_resolution(r));
  return out;
}

// Writes to --out when given, else to `fallback`.
void emit(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& body) {
  if (path.empty()) {
    body(fallback);
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  body(f);
  if (!f) throw IoError("write failed for '" + path + "'");
}

int cmd_analyze(const Common& c, std::ostream& out) {
  const RunConfig cfg = load_config(c);
  const ModelGraph g = build_bcpnet(cfg.model);
  const auto reports = resolution_sweep(g, resolutions(c, default_analyze_resolutions()));
  emit(c.out, out, [&](std::ostream& os) { write_sweep_csv(reports, os); });
  if (c.out.empty()) out << '\n';
  const auto p = count_params(g);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "params: total %llu, backbone %llu, bcp %llu, classifier %llu\n",
                static_cast<unsigned long long>(p.total), static_cast<unsigned long long>(p.backbone),
                static_cast<unsigned long long>(p.bcp), static_cast<unsigned long long>(p.classifier));
  out << buf;
  write_sweep_table(reports, out);
  return kExitOk;
}

WeightStore<float> weights_for(const Common& c, const ModelGraph& g, const RunConfig& cfg) {
  if (c.weights.empty()) return init_weights<float>(g, cfg.train.seed);
  auto w = load_weights<float>(c.weights);
  check_weights(g, w);
  return w;
}

int cmd_bench(const Common& c, std::size_t warmup, std::size_t iters, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(c);
  const ModelGraph g = build_bcpnet(cfg.model);
  const auto w = weights_for(c, g, cfg);
  const auto results = run_bench(g, w, resolutions(c, default_bench_resolutions()), warmup, iters, cfg.train.seed);
  emit(c.out, out, [&](std::ostream& os) { write_bench_csv(results, os); });
  if (!median_nondecreasing(results)) err << "note: median latency is not non-decreasing in pixel count\n";
  return kExitOk;
}

int cmd_infer(const Common& c, const std::string& input, const std::string& overlay, std::ostream& out) {
  if (c.weights.empty()) throw ConfigError("infer needs --weights");
  if (c.out.empty()) throw ConfigError("infer needs --out");
  const RunConfig cfg = load_config(c);
  const ModelGraph g = build_bcpnet(cfg.model);
  const auto w = load_weights<float>(c.weights);
  check_weights(g, w);
  const auto image = read_image(input);
  const auto st = forward(g, w, normalize_image(image), ForwardMode::kInference);
  const LabelMap labels = argmax_labels(st.logits());
  const Palette palette = make_palette(cfg.model.num_classes);
  write_label_png(labels, palette, c.out);
  if (!overlay.empty()) write_overlay_png(image, labels, palette, overlay);
  out << "wrote " << c.out << " (" << labels.h() << "x" << labels.w() << ")\n";
  return kExitOk;
}

int cmd_gradcheck(const Common& c, std::size_t coords, std::ostream& out) {
  const RunConfig cfg = load_config(c);
  const ModelGraph g = build_bcpnet(cfg.model);
  const auto res = resolutions(c, {{64, 64}});
  if (res.size() != 1) throw ConfigError("gradcheck takes a single --res");
  const std::uint64_t seed = cfg.train.seed;
  const auto w = gradcheck_weights(g, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Tensor4<double> x(Shape4{1, 3, res[0].h, res[0].w});
  for (double& v : x.data()) v = u(rng);
  LabelMap labels(1, res[0].h, res[0].w);
  for (auto& v : labels.data()) v = static_cast<std::int32_t>(rng() % cfg.model.num_classes);
  const auto r = gradcheck_graph(g, w, x, labels, 1e-5, coords, seed);
  bool ok = true;
  emit(c.out, out, [&](std::ostream& os) {
    os << "slot,numel,checked,skipped,max_rel_error\n";
    char buf[64];
    auto row = [&](const SlotCheck& s) {
      std::snprintf(buf, sizeof(buf), "%.3e", s.max_rel_error);
      os << s.slot << ',' << s.numel << ',' << s.checked << ',' << s.skipped << ',' << buf << '\n';
      if (!(s.max_rel_error <= kGradTolerance)) ok = false;
    };
    for (const auto& s : r.slots) row(s);
    row(r.input);
  });
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max_rel_error %.3e (tolerance %.0e): %s\n", r.max_rel_error, kGradTolerance,
                ok ? "pass" : "FAIL");
  out << buf;
  return ok ? kExitOk : kExitFailure;
}

std::string sibling(const std::string& path, const std::string& suffix) { return path + suffix; }

int cmd_train_toy(const Common& c, std::string history, std::string eval, std::ostream& out) {
  if (c.out.empty()) throw ConfigError("train-toy needs --out for the weights file");
  if (c.classes && *c.classes != kSynthClasses) {
    throw ConfigError("the toy task has " + std::to_string(kSynthClasses) + " classes");
  }
  RunConfig cfg = load_config(c);
  cfg.model.num_classes = kSynthClasses;
  const ModelGraph g = build_bcpnet(cfg.model);
  const SynthGenerator data(cfg.train.sample_h, cfg.train.sample_w);
  const auto r = train_loop(g, cfg.train, data);
  if (history.empty()) history = sibling(c.out, ".history.csv");
  if (eval.empty()) eval = sibling(c.out, ".eval.csv");
  save_weights(r.weights, c.out);
  emit(history, out, [&](std::ostream& os) { write_history_csv(r.history, os); });
  emit(eval, out, [&](std::ostream& os) { write_eval_csv(r.eval, os); });
  char buf[64];
  std::snprintf(buf, sizeof(buf), "final_miou %.6f\n", r.eval.mean);
  out << buf;
  return kExitOk;
}

int cmd_ablate(const Common& c, std::ostream& out, std::ostream& err) {
  if (c.classes && *c.classes != kSynthClasses) {
    throw ConfigError("the toy task has " + std::to_string(kSynthClasses) + " classes");
  }
  RunConfig cfg = load_config(c);
  cfg.model.num_classes = kSynthClasses;
  const SynthGenerator data(cfg.train.sample_h, cfg.train.sample_w);
  struct Variant {
    const char* name;
    AblationConfig ab;
  };
  const Variant variants[] = {{"baseline", {false, PoolKind::kMax, 3}},
                              {"max3x3", {true, PoolKind::kMax, 3}},
                              {"avg3x3", {true, PoolKind::kAvg, 3}},
                              {"max5x5", {true, PoolKind::kMax, 5}}};
  std::ostringstream csv;
  csv << "variant,params,final_miou\n";
  for (const auto& v : variants) {
    ModelConfig m = cfg.model;
    m.ablation = v.ab;
    const ModelGraph g = build_bcpnet(m);
    const auto r = train_loop(g, cfg.train, data);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s,%llu,%.6f\n", v.name, static_cast<unsigned long long>(count_params(g).total),
                  r.eval.mean);
    csv << buf;
    err << "ablate: " << buf;
  }
  emit(c.out, out, [&](std::ostream& os) { os << csv.str(); });
  return kExitOk;
}

void add_common(CLI::App* sub, Common& c, bool weights, bool res, bool seed) {
  sub->add_option("--config", c.config, "RunConfig file (key = value lines)")->check(CLI::ExistingFile);
  if (weights) sub->add_option("--weights", c.weights, "Weights file (BCPW)");
  if (res) sub->add_option("--res", c.res, "Input resolution HxW (repeatable)");
  if (seed) sub->add_option("--seed", c.seed, "Seed (overrides the config)");
  sub->add_option("--classes", c.classes, "Number of classes (overrides the config)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"BCPNet engine: complexity analysis, benchmarking, inference, gradient checks and toy training"};
  app.name("bcpnet");
  app.require_subcommand(1);
  Common c;
  std::size_t warmup = kDefaultWarmup, iters = kDefaultIters, coords = 3;
  std::string input, overlay, history, eval;

  auto* analyze = app.add_subcommand("analyze", "Parameter and MAC/FLOP counts per resolution");
  add_common(analyze, c, false, true, false);
  analyze->add_option("--out", c.out, "CSV path (default: stdout)");

  auto* bench = app.add_subcommand("bench", "Latency harness: warmup, timed forwards, median ms and fps");
  add_common(bench, c, true, true, true);
  bench->add_option("--out", c.out, "CSV path (default: stdout)");
  bench->add_option("--warmup", warmup, "Warmup passes per resolution")->capture_default_str();
  bench->add_option("--iters", iters, "Timed passes per resolution")->capture_default_str();

  auto* infer = app.add_subcommand("infer", "Segment one PNG into an indexed label PNG");
  add_common(infer, c, true, false, false);
  infer->add_option("--input", input, "Input PNG (8-bit)")->required();
  infer->add_option("--out", c.out, "Label PNG path");
  infer->add_option("--overlay", overlay, "Optional color overlay PNG path");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every parameter slot");
  add_common(grad, c, false, true, true);
  grad->add_option("--out", c.out, "Per-slot CSV path (default: stdout)");
  grad->add_option("--coords", coords, "Sampled coordinates per slot (0 = all)")->capture_default_str();

  auto* toy = app.add_subcommand("train-toy", "Train on the synthetic 3-class task");
  add_common(toy, c, false, false, true);
  toy->add_option("--out", c.out, "Weights file path")->required();
  toy->add_option("--history", history, "History CSV path (default: <out>.history.csv)");
  toy->add_option("--eval", eval, "Evaluation CSV path (default: <out>.eval.csv)");

  auto* ablate = app.add_subcommand("ablate", "Baseline vs the three context-pooling variants on the toy task");
  add_common(ablate, c, false, false, true);
  ablate->add_option("--out", c.out, "CSV path (default: stdout)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    if (const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
      err << "run `bcpnet " << sub->get_name() << " --help` for the flags\n";
    } else {
      err << "run `bcpnet --help` for the commands\n";
    }
    return kExitUsage;
  }

  try {
    if (analyze->parsed()) return cmd_analyze(c, out);
    if (bench->parsed()) return cmd_bench(c, warmup, iters, out, err);
    if (infer->parsed()) return cmd_infer(c, input, overlay, out);
    if (grad->parsed()) return cmd_gradcheck(c, coords, out);
    if (toy->parsed()) return cmd_train_toy(c, history, eval, out);
    if (ablate->parsed()) return cmd_ablate(c, out, err);
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << "\n";
    return kExitFailure;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace bcpnet
