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
#ifndef BCPNET_BENCH_HPP_
#define BCPNET_BENCH_HPP_

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "bcpnet/complexity.hpp"
#include "bcpnet/graph.hpp"

namespace bcpnet {

struct BenchResult {
  Resolution input;
  std::size_t warmup_iters = 0;
  std::size_t timed_iters = 0;
  std::vector<double> times_ms;  // in run order
  double median_ms = 0.0;
  double fps = 0.0;  // 1000 / median_ms
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

// 360x640, 512x1024, 720x960, 720x1280, 768x1536, 1080x1920, 1024x1024,
// 1024x2048.
std::vector<Resolution> default_bench_resolutions();

inline constexpr std::size_t kDefaultWarmup = 10;
inline constexpr std::size_t kDefaultIters = 50;

// Times single-image inference forwards on a random input per resolution.
// Iterations are interleaved round-robin across resolutions so that slow
// drift of the machine hits every row alike. Results are sorted by pixel
// count. Throws ConfigError when warmup < 1, iters < 10 or the list is empty.
std::vector<BenchResult> run_bench(const ModelGraph& g, const WeightStore<float>& weights,
                                   const std::vector<Resolution>& resolutions, std::size_t warmup = kDefaultWarmup,
                                   std::size_t iters = kDefaultIters, std::uint64_t seed = 0);

double median(std::vector<double> v);

// True when median_ms never drops as the pixel count grows.
bool median_nondecreasing(const std::vector<BenchResult>& results);

// `h,w,params,macs,median_ms,fps`
void write_bench_csv(const std::vector<BenchResult>& results, std::ostream& os);

}  // namespace bcpnet

#endif  // BCPNET_BENCH_HPP_
