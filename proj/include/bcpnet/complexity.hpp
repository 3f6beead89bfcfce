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
#ifndef BCPNET_COMPLEXITY_HPP_
#define BCPNET_COMPLEXITY_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bcpnet/graph.hpp"

namespace bcpnet {

struct Resolution {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t pixels() const { return h * w; }
  std::string str() const { return std::to_string(h) + "x" + std::to_string(w); }
  bool operator==(const Resolution&) const = default;
};

// Parses "HxW"; throws ConfigError on anything else.
Resolution parse_resolution(const std::string& text);

// 360x640, 713x713, 512x1024, 768x1536, 1024x1024, 1024x2048.
std::vector<Resolution> default_analyze_resolutions();

struct ComplexityRow {
  std::string layer;
  LayerKind kind = LayerKind::kConv;
  Shape4 out_shape;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  // Pool compares, resize blends, affine, activation and add element ops.
  // Reported but excluded from MACs/FLOPs.
  std::uint64_t side_ops = 0;
};

struct ComplexityReport {
  Resolution input;
  std::vector<ComplexityRow> rows;
  std::uint64_t total_params = 0;
  std::uint64_t total_macs = 0;
  std::uint64_t total_side_ops = 0;

  // FLOPs = 2 * MACs.
  std::uint64_t flops() const { return 2 * total_macs; }
};

std::uint64_t layer_params(const LayerSpec& layer);

struct ParamCount {
  std::vector<std::pair<std::string, std::uint64_t>> per_layer;
  std::uint64_t total = 0;
  // Split by component: stem + stages, context pools, BCP module, classifier.
  std::uint64_t backbone = 0;
  std::uint64_t bcp = 0;
  std::uint64_t classifier = 0;
};

ParamCount count_params(const ModelGraph& g);

// MACs for a single (1, 3, h, w) input.
ComplexityReport count_macs(const ModelGraph& g, std::size_t h, std::size_t w);

std::vector<ComplexityReport> resolution_sweep(const ModelGraph& g, const std::vector<Resolution>& resolutions);

// `layer,kind,out_shape,params,macs` plus a trailing totals row.
void write_report_csv(const ComplexityReport& report, std::ostream& os);

// `h,w,params,macs,flops`, one row per resolution.
void write_sweep_csv(const std::vector<ComplexityReport>& reports, std::ostream& os);

// Wide layout: one params column, then MACs / FLOPs per resolution.
void write_sweep_table(const std::vector<ComplexityReport>& reports, std::ostream& os);

}  // namespace bcpnet

#endif  // BCPNET_COMPLEXITY_HPP_
