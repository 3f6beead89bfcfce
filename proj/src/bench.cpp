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
#include "bcpnet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <random>

namespace bcpnet {

std::vector<Resolution> default_bench_resolutions() {
  return {{360, 640}, {512, 1024}, {720, 960}, {720, 1280}, {768, 1536}, {1080, 1920}, {1024, 1024}, {1024, 2048}};
}

double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::vector<BenchResult> run_bench(const ModelGraph& g, const WeightStore<float>& weights,
                                   const std::vector<Resolution>& resolutions, std::size_t warmup, std::size_t iters,
                                   std::uint64_t seed) {
  if (warmup < 1) throw ConfigError("bench needs at least 1 warmup iteration");
  if (iters < 10) throw ConfigError("bench needs at least 10 timed iterations");
  if (resolutions.empty()) throw ConfigError("bench needs at least one resolution");

  std::vector<Resolution> order = resolutions;
  std::stable_sort(order.begin(), order.end(),
                   [](const Resolution& a, const Resolution& b) { return a.pixels() < b.pixels(); });

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  std::vector<Tensor4<float>> inputs;
  std::vector<BenchResult> out(order.size());
  const auto params = count_params(g).total;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Resolution r = order[i];
    Tensor4<float> x(Shape4{1, 3, r.h, r.w});
    for (float& v : x.data()) v = u(rng);
    inputs.push_back(std::move(x));
    out[i].input = r;
    out[i].warmup_iters = warmup;
    out[i].timed_iters = iters;
    out[i].params = params;
    out[i].macs = count_macs(g, r.h, r.w).total_macs;
    out[i].times_ms.reserve(iters);
  }

  using clock = std::chrono::steady_clock;
  for (std::size_t round = 0; round < warmup + iters; ++round) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto t0 = clock::now();
      const auto st = forward(g, weights, inputs[i], ForwardMode::kInference);
      const auto t1 = clock::now();
      if (st.logits().size() == 0) throw StateError("empty logits");
      if (round >= warmup) out[i].times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  for (auto& r : out) {
    r.median_ms = median(r.times_ms);
    r.fps = 1000.0 / r.median_ms;
  }
  return out;
}

bool median_nondecreasing(const std::vector<BenchResult>& results) {
  for (std::size_t i = 1; i < results.size(); ++i) {
    if (results[i].input.pixels() > results[i - 1].input.pixels() && results[i].median_ms < results[i - 1].median_ms) {
      return false;
    }
  }
  return true;
}

void write_bench_csv(const std::vector<BenchResult>& results, std::ostream& os) {
  os << "h,w,params,macs,median_ms,fps\n";
  char buf[160];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%llu,%llu,%.4f,%.3f\n", r.input.h, r.input.w,
                  static_cast<unsigned long long>(r.params), static_cast<unsigned long long>(r.macs), r.median_ms,
                  r.fps);
    os << buf;
  }
}

}  // namespace bcpnet
