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
// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bcpnet/autograd.hpp"
#include "bcpnet/bench.hpp"
#include "bcpnet/cli.hpp"
#include "bcpnet/complexity.hpp"
#include "bcpnet/modelio.hpp"
#include "bcpnet/train.hpp"
#include "oracles.hpp"

using namespace bcpnet;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kParamsTotal = 0.61e6, kParamsTotalTol = 0.10;
constexpr double kParamsBase = 0.43e6, kParamsBaseTol = 0.15;
constexpr double kParamsBcp = 0.18e6, kParamsBcpTol = 0.15;
constexpr double kFlopsTol = 0.25;
constexpr int kRandomConfigs = 120;
constexpr double kFdEps = 1e-5;
constexpr double kOpTol = 1e-6;
constexpr double kGraphTol = 1e-4;
constexpr double kMiouFloor = 0.6;
constexpr double kLrTol = 1e-12;

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool within(double got, double want, double rel) { return std::abs(got - want) <= rel * want; }

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("bcpnet_accept_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int cli(std::vector<std::string> args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = run_cli(args, o, e);
  if (out) *out = o.str();
  return code;
}

double dot(const Tensor4<double>& a, const Tensor4<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Max relative error of d<r, op(x)>/dx against `analytic`.
double fd(Tensor4<double> x, const std::function<Tensor4<double>(const Tensor4<double>&)>& op,
          const Tensor4<double>& r, std::span<const double> analytic) {
  auto f = [&](std::span<const double> v) {
    std::copy(v.begin(), v.end(), x.data().begin());
    return dot(op(x), r);
  };
  const Tensor4<double> base = x;
  return finite_diff_check(f, base.data(), analytic, kFdEps).max_rel_error;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Outcome params_budget() {
  Outcome o;
  const auto full = count_params(build_bcpnet(AblationConfig{}, 19));
  const auto base = count_params(build_bcpnet(AblationConfig{false, PoolKind::kMax, 3}, 19));
  o.require(within(double(full.total), kParamsTotal, kParamsTotalTol), "total " + std::to_string(full.total));
  o.require(within(double(base.total), kParamsBase, kParamsBaseTol), "baseline " + std::to_string(base.total));
  o.require(within(double(full.bcp), kParamsBcp, kParamsBcpTol), "bcp " + std::to_string(full.bcp));
  o.detail = o.pass ? "total " + std::to_string(full.total) + ", baseline " + std::to_string(base.total) + ", bcp " +
                          std::to_string(full.bcp)
                    : o.detail;
  return o;
}

Outcome flops_table() {
  Outcome o;
  std::vector<std::string> res;
  for (const auto& r : default_analyze_resolutions()) res.push_back(std::to_string(r.h) + "x" + std::to_string(r.w));
  const double want_g[] = {0.51, 1.12, 1.13, 2.53, 2.25, 4.50};
  std::vector<std::string> args{"analyze"};
  for (const auto& r : res) args.insert(args.end(), {"--res", r});
  std::string out;
  if (cli(args, &out) != kExitOk) {
    o.require(false, "analyze exited nonzero");
    return o;
  }
  std::istringstream in(out);
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> rows;  // res -> (macs, flops)
  while (std::getline(in, line) && !line.empty()) {
    unsigned long long h, w, p, m, f;
    if (std::sscanf(line.c_str(), "%llu,%llu,%llu,%llu,%llu", &h, &w, &p, &m, &f) != 5) break;
    rows[std::to_string(h) + "x" + std::to_string(w)] = {m, f};
  }
  std::string got;
  for (std::size_t i = 0; i < res.size(); ++i) {
    const auto it = rows.find(res[i]);
    if (it == rows.end()) {
      o.require(false, "missing row " + res[i]);
      continue;
    }
    const double g = double(it->second.second) / 1e9;
    got += (got.empty() ? "" : " ") + res[i] + "=" + fmt("%.3fG", g);
    o.require(within(g, want_g[i], kFlopsTol), res[i] + " " + fmt("%.3fG", g));
  }
  if (rows.count("1024x1024") && rows.count("1024x2048"))
    o.require(rows["1024x2048"].first == 2 * rows["1024x1024"].first, "1024x2048 is not twice 1024x1024");
  if (o.pass) o.detail = got;
  return o;
}

ModelGraph single_layer(std::size_t c, LayerSpec layer) {
  ModelGraph g;
  std::string src = kInputId;
  if (c != 3) {
    g.append({"pre", LayerKind::kConv, ConvSpec{3, c, 1, 1, 0, 1, false}, {kInputId}});
    src = "pre";
  }
  for (auto& in : layer.inputs) in = src;
  g.append(std::move(layer));
  return g;
}

Outcome oracle_match() {
  Outcome o;
  std::mt19937_64 rng(2024);
  int run = 0, mac_bad = 0, conv_bad = 0, pool_bad = 0, resize_bad = 0;
  while (run < kRandomConfigs) {
    const std::size_t c = pick(rng, 1, 5), h = pick(rng, 1, 12), w = pick(rng, 1, 12);
    const std::size_t k = 1 + 2 * pick(rng, 0, 2), stride = pick(rng, 1, 2), pad = pick(rng, 0, k / 2);
    if (h + 2 * pad < k || w + 2 * pad < k) continue;
    const auto x = oracle::random({pick(rng, 1, 2), c, h, w}, rng);

    const bool depthwise = pick(rng, 0, 1) == 1;
    const std::size_t groups = depthwise ? c : 1, cout = depthwise ? c : pick(rng, 1, 6);
    const auto wt = oracle::random({cout, c / groups, k, k}, rng);
    std::vector<double> bias(cout);
    for (auto& b : bias) b = std::uniform_real_distribution<double>(-1, 1)(rng);
    const auto want = oracle::conv(x, wt, bias, long(stride), long(pad), long(groups));
    const auto got = conv2d<double>(x, wt, bias, ConvGeometry{stride, pad, groups});
    if (!(got == want.out)) ++conv_bad;
    // The oracle counts multiplies over the whole batch; the analyzer counts
    // one image.
    const ModelGraph g =
        single_layer(c, {"t", LayerKind::kConv, ConvSpec{c, cout, k, stride, pad, groups, true}, {kInputId}});
    if (count_macs(g, h, w).rows.back().macs * x.shape().n != want.mults) ++mac_bad;

    const std::size_t pk = pick(rng, 0, 1) ? 3 : 5, ppad = pick(rng, 0, pk / 2);
    if (h + 2 * ppad >= pk && w + 2 * ppad >= pk) {
      const bool is_max = pick(rng, 0, 1) == 1;
      const auto p = pool2d(x, PoolParams{is_max ? PoolKind::kMax : PoolKind::kAvg, pk, stride, ppad});
      if (!(p == oracle::pool(x, is_max, long(pk), long(stride), long(ppad)))) ++pool_bad;
    }
    const std::size_t oh = pick(rng, 1, 24), ow = pick(rng, 1, 24);
    if (!(bilinear_resize(x, oh, ow) == oracle::resize(x, long(oh), long(ow)))) ++resize_bad;
    ++run;
  }
  o.require(mac_bad == 0, std::to_string(mac_bad) + " MAC mismatches");
  o.require(conv_bad == 0, std::to_string(conv_bad) + " conv mismatches");
  o.require(pool_bad == 0, std::to_string(pool_bad) + " pool mismatches");
  o.require(resize_bad == 0, std::to_string(resize_bad) + " resize mismatches");
  if (o.pass) o.detail = std::to_string(run) + " configs, all bit-exact";
  return o;
}

Outcome gradients() {
  Outcome o;
  std::mt19937_64 rng(77);
  double worst = 0.0;
  auto note = [&](const std::string& op, double err) {
    worst = std::max(worst, err);
    o.require(err < kOpTol, op + " " + fmt("%.2e", err));
  };

  {
    const auto x = oracle::random({2, 4, 7, 6}, rng);
    const auto wt = oracle::random({4, 2, 3, 3}, rng);
    const std::vector<double> b{0.1, -0.2, 0.3, 0.0};
    const ConvGeometry geo{2, 1, 2};
    const auto r = oracle::random(conv2d<double>(x, wt, b, geo).shape(), rng);
    const auto g = conv2d_backward(x, wt, true, geo, r);
    note("conv dx", fd(x, [&](const Tensor4<double>& v) { return conv2d<double>(v, wt, b, geo); }, r, g.dx.data()));
    note("conv dw",
         fd(wt, [&](const Tensor4<double>& v) { return conv2d<double>(x, v, b, geo); }, r, g.dweight.data()));
    Tensor4<double> bt({1, 4, 1, 1}, b);
    note("conv db", fd(bt, [&](const Tensor4<double>& v) { return conv2d<double>(x, wt, v.data(), geo); }, r,
                       std::span<const double>(g.dbias)));
  }
  {
    const auto x = oracle::random({1, 3, 6, 5}, rng);
    ConvParams<double> dw{oracle::random({3, 1, 3, 3}, rng), {}, {1, 1, 3}};
    ConvParams<double> pw{oracle::random({4, 3, 1, 1}, rng), {0.1, -0.2, 0.3, 0.0}, {}};
    const auto r = oracle::random({1, 4, 6, 5}, rng);
    const auto g = separable_conv_backward(x, dw, pw, r);
    note("separable dx", fd(x, [&](const Tensor4<double>& v) { return separable_conv(v, dw, pw); }, r, g.dx.data()));
    note("separable ddw", fd(dw.weight, [&](const Tensor4<double>& v) {
           return separable_conv(x, {v, {}, dw.geometry}, pw);
         }, r, g.ddw.data()));
    note("separable dpw", fd(pw.weight, [&](const Tensor4<double>& v) {
           return separable_conv(x, dw, {v, pw.bias, {}});
         }, r, g.dpw.data()));
  }
  for (PoolParams p : {PoolParams{PoolKind::kMax, 3, 2, 1}, PoolParams{PoolKind::kAvg, 3, 2, 1},
                       PoolParams{PoolKind::kMax, 5, 2, 2}, PoolParams{PoolKind::kAvg, 5, 2, 2}}) {
    const auto x = oracle::random({1, 2, 9, 8}, rng);
    const auto r = oracle::random(pool_out_shape(x.shape(), p), rng);
    note(std::string(p.kind == PoolKind::kMax ? "max" : "avg") + std::to_string(p.k) + " pool",
         fd(x, [&](const Tensor4<double>& v) { return pool2d(v, p); }, r, pool2d_backward(x, p, r).data()));
  }
  {
    const auto x = oracle::random({1, 2, 4, 5}, rng);
    const auto r = oracle::random({1, 2, 9, 7}, rng);
    note("resize", fd(x, [&](const Tensor4<double>& v) { return bilinear_resize(v, 9, 7); }, r,
                      bilinear_resize_backward(r, 4, 5).data()));
  }
  {
    const auto a = oracle::random({1, 3, 4, 4}, rng), b = oracle::random({1, 3, 4, 4}, rng);
    const auto r = oracle::random(a.shape(), rng);
    const FusionWeights<double> fw{0.7, -1.2};
    const auto g = weighted_fusion_backward(a, b, fw, r);
    note("fusion ds", fd(a, [&](const Tensor4<double>& v) { return weighted_fusion(v, b, fw); }, r, g.ds.data()));
    note("fusion dc", fd(b, [&](const Tensor4<double>& v) { return weighted_fusion(a, v, fw); }, r, g.dc.data()));
    Tensor4<double> ts({1, 1, 1, 2}, {fw.theta, fw.sigma});
    note("fusion weights", fd(ts, [&](const Tensor4<double>& v) {
           return weighted_fusion(a, b, FusionWeights<double>{v[0], v[1]});
         }, r, std::vector<double>{g.dtheta, g.dsigma}));
  }
  {
    const auto x = oracle::random({1, 3, 4, 5}, rng);
    const std::vector<double> scale{0.5, -1.5, 2.0}, shift{0.1, 0.2, -0.3};
    const auto r = oracle::random(x.shape(), rng);
    const auto g = channel_affine_backward<double>(x, scale, r);
    note("affine dx", fd(x, [&](const Tensor4<double>& v) { return channel_affine<double>(v, scale, shift); }, r,
                         g.dx.data()));
    Tensor4<double> sc({1, 3, 1, 1}, scale), sh({1, 3, 1, 1}, shift);
    note("affine dscale", fd(sc, [&](const Tensor4<double>& v) { return channel_affine<double>(x, v.data(), shift); },
                             r, std::span<const double>(g.dscale)));
    note("affine dshift", fd(sh, [&](const Tensor4<double>& v) { return channel_affine<double>(x, scale, v.data()); },
                             r, std::span<const double>(g.dshift)));
  }
  {
    // Samples kept at least 0.05 away from the kinks at 0 and 6.
    auto u = Tensor4<double>::generate({1, 2, 5, 5}, [&](auto...) {
      const double v = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
      const auto band = rng() % 3;
      return band == 0 ? -v : band == 1 ? v * 5.0 + 0.2 : 6.0 + v;
    });
    const auto r = oracle::random(u.shape(), rng);
    for (Unary k : {Unary::kRelu, Unary::kRelu6})
      note(unary_name(k), fd(u, [&](const Tensor4<double>& v) { return map_unary(v, k); }, r,
                             unary_backward(u, k, r).data()));
  }
  {
    auto logits = oracle::random({2, 5, 3, 4}, rng, -3, 3);
    LabelMap labels(2, 3, 4);
    for (auto& v : labels.data()) v = std::int32_t(rng() % 6 == 5 ? kIgnoreIndex : rng() % 5);
    const auto grad = softmax_cross_entropy(logits, labels).grad;
    auto f = [&](std::span<const double> v) {
      std::copy(v.begin(), v.end(), logits.data().begin());
      return softmax_cross_entropy(logits, labels).loss;
    };
    const Tensor4<double> base = logits;
    note("cross entropy", finite_diff_check(f, base.data(), grad.data(), kFdEps).max_rel_error);
  }

  const ModelGraph g = build_bcpnet(AblationConfig{}, 19);
  const auto w = gradcheck_weights(g, 0);
  std::mt19937_64 grng(100);
  const auto x = oracle::random({1, 3, 64, 64}, grng, 0, 1);
  LabelMap labels(1, 64, 64);
  for (auto& v : labels.data()) v = std::int32_t(grng() % 19);
  const auto r = gradcheck_graph(g, w, x, labels, kFdEps, 3, 0);
  o.require(r.max_rel_error < kGraphTol, "end-to-end " + fmt("%.2e", r.max_rel_error));
  if (o.pass) o.detail = "ops max " + fmt("%.2e", worst) + ", end-to-end " + fmt("%.2e", r.max_rel_error);
  return o;
}

Outcome ablation() {
  Outcome o;
  const SynthGenerator data(64, 64);
  std::vector<double> bcp, base;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    bcp.push_back(train_loop(build_bcpnet(AblationConfig{}, kSynthClasses), cfg, data).eval.mean);
    base.push_back(
        train_loop(build_bcpnet(AblationConfig{false, PoolKind::kMax, 3}, kSynthClasses), cfg, data).eval.mean);
  }
  const double mb = median(bcp), ms = median(base);
  std::string runs = "bcp";
  for (double v : bcp) runs += fmt(" %.4f", v);
  runs += ", baseline";
  for (double v : base) runs += fmt(" %.4f", v);
  o.require(mb > ms, "median bcp not above baseline");
  o.require(mb >= kMiouFloor, "median bcp below floor");
  o.detail = "median bcp " + fmt("%.4f", mb) + " vs baseline " + fmt("%.4f", ms) + " (" + runs + ")" +
             (o.pass ? "" : ": " + o.detail);
  return o;
}

Outcome determinism() {
  Outcome o;
  const fs::path d = scratch();
  auto train = [&](const std::string& tag) {
    return cli({"train-toy", "--seed", "7", "--out", (d / (tag + ".bcpw")).string()});
  };
  if (train("a") != kExitOk || train("b") != kExitOk) {
    o.require(false, "train-toy exited nonzero");
    return o;
  }
  o.require(slurp(d / "a.bcpw") == slurp(d / "b.bcpw"), "weights differ");
  o.require(slurp(d / "a.bcpw.history.csv") == slurp(d / "b.bcpw.history.csv"), "history differs");

  std::mt19937_64 rng(9);
  write_image_png(SynthGenerator(96, 128).sample(rng).image, (d / "in.png").string());
  auto infer = [&](const std::string& out) {
    return cli({"infer", "--weights", (d / "a.bcpw").string(), "--classes", "3", "--input",
                (d / "in.png").string(), "--out", (d / out).string()});
  };
  if (infer("l1.png") != kExitOk || infer("l2.png") != kExitOk) {
    o.require(false, "infer exited nonzero");
    return o;
  }
  const auto l1 = slurp(d / "l1.png");
  o.require(!l1.empty() && l1 == slurp(d / "l2.png"), "label PNGs differ");
  if (o.pass) o.detail = "weights, history and label PNG byte-identical";
  return o;
}

Outcome bench_order() {
  Outcome o;
  const ModelGraph g = build_bcpnet(AblationConfig{}, 19);
  const auto w = init_weights<float>(g, 0);
  const auto results = run_bench(g, w, default_bench_resolutions());
  std::string row;
  for (const auto& r : results)
    row += (row.empty() ? "" : " ") + std::to_string(r.input.h) + "x" + std::to_string(r.input.w) + "=" +
           fmt("%.1fms", r.median_ms);
  o.require(median_nondecreasing(results), "median latency decreases with pixel count");
  o.detail = row + (o.pass ? "" : ": " + o.detail);
  return o;
}

Outcome shapes() {
  Outcome o;
  const std::size_t k = 19;
  const ModelGraph g = build_bcpnet(AblationConfig{}, k);
  const auto w = init_weights<float>(g, 1);
  const std::size_t factors[] = {8, 16, 32, 64, 128};
  for (auto [h, wd] : {std::pair<std::size_t, std::size_t>{64, 64}, {113, 97}, {360, 640}, {713, 713}}) {
    const std::string tag = std::to_string(h) + "x" + std::to_string(wd);
    const auto st = forward(g, w, Tensor4<float>({1, 3, h, wd}, 0.25f), ForwardMode::kInference);
    o.require(st.logits().shape() == Shape4{1, k, h, wd}, tag + " logits");
    std::vector<std::pair<std::size_t, std::size_t>> lv;
    std::size_t ch = h, cw = wd;
    for (int i = 0; i < 7; ++i) {
      ch = (ch + 2 - 3) / 2 + 1;
      cw = (cw + 2 - 3) / 2 + 1;
      lv.emplace_back(ch, cw);
    }
    auto hw = [&](const std::string& tap) {
      const auto& s = st.tap(tap).shape();
      return std::pair<std::size_t, std::size_t>(s.h, s.w);
    };
    for (int i = 0; i < 5; ++i) o.require(hw("layer" + std::to_string(i + 1)) == lv[i], tag + " layer");
    o.require(hw("p6") == lv[5], tag + " p6");
    o.require(hw("p7") == lv[6], tag + " p7");
    for (int i = 0; i < 5; ++i) {
      const std::string f = std::to_string(factors[i]);
      o.require(hw("lat" + f) == lv[i + 2], tag + " lat" + f);
      if (i < 4) o.require(hw("td1@" + f) == lv[i + 2], tag + " td1@" + f);
      if (i < 4) o.require(hw("td2@" + f) == lv[i + 2], tag + " td2@" + f);
      if (i > 0) o.require(hw("bu@" + f) == lv[i + 2], tag + " bu@" + f);
    }
  }
  if (o.pass) o.detail = "64x64 113x97 360x640 713x713";
  return o;
}

Outcome schedule() {
  Outcome o;
  const TrainConfig cfg;
  const std::size_t t = cfg.total_iter;
  const double a = poly_lr(cfg, 0), b = poly_lr(cfg, t / 2), c = poly_lr(cfg, t);
  o.require(std::abs(a - 0.1) <= kLrTol * 0.1, "lr(0) " + fmt("%.17g", a));
  o.require(std::abs(b - 0.053588673126814627) <= kLrTol * 0.053588673126814627, "lr(T/2) " + fmt("%.17g", b));
  o.require(c == 0.0, "lr(T) " + fmt("%.17g", c));
  if (o.pass) o.detail = fmt("%.17g", a) + " " + fmt("%.17g", b) + " " + fmt("%.17g", c);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"parameter budget", params_budget}, {"FLOPs table", flops_table},   {"oracle agreement", oracle_match},
      {"gradient checks", gradients},      {"ablation", ablation},         {"determinism", determinism},
      {"bench ordering", bench_order},     {"tap shapes", shapes},         {"poly schedule", schedule},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::error_code ec;
  fs::remove_all(scratch(), ec);
  return failed == 0 ? 0 : 1;
}
