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
#include "bcpnet/complexity.hpp"

#include <cstdio>
#include <ostream>

namespace bcpnet {

std::vector<Resolution> default_analyze_resolutions() {
  return {{360, 640}, {713, 713}, {512, 1024}, {768, 1536}, {1024, 1024}, {1024, 2048}};
}

Resolution parse_resolution(const std::string& text) {
  const auto x = text.find('x');
  auto parse_dim = [&](const std::string& s) -> std::size_t {
    if (s.empty() || s.size() > 9 || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("malformed resolution '" + text + "', expected HxW");
    }
    const std::size_t v = std::stoul(s);
    if (v == 0) throw ConfigError("resolution '" + text + "' has a zero dimension");
    return v;
  };
  if (x == std::string::npos) throw ConfigError("malformed resolution '" + text + "', expected HxW");
  return {parse_dim(text.substr(0, x)), parse_dim(text.substr(x + 1))};
}

std::uint64_t layer_params(const LayerSpec& layer) {
  std::uint64_t total = 0;
  for (const auto& s : param_slots(layer)) total += s.shape.numel();
  return total;
}

ParamCount count_params(const ModelGraph& g) {
  ParamCount pc;
  for (const auto& l : g.layers) {
    const std::uint64_t p = layer_params(l);
    pc.per_layer.emplace_back(l.id, p);
    pc.total += p;
    if (l.id.rfind("bcp.", 0) == 0) {
      pc.bcp += p;
    } else if (l.id.rfind("cls.", 0) == 0) {
      pc.classifier += p;
    } else {
      pc.backbone += p;
    }
  }
  return pc;
}

ComplexityReport count_macs(const ModelGraph& g, std::size_t h, std::size_t w) {
  const auto shapes = infer_shapes(g, {1, 3, h, w});
  ComplexityReport r;
  r.input = {h, w};
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    const Shape4& o = shapes[i];
    ComplexityRow row;
    row.layer = l.id;
    row.kind = l.kind;
    row.out_shape = o;
    row.params = layer_params(l);
    const std::uint64_t spatial = o.h * o.w;
    switch (l.kind) {
      case LayerKind::kConv: {
        const auto& c = std::get<ConvSpec>(l.params);
        row.macs = spatial * c.c_out * c.k * c.k * (c.c_in / c.groups);
        break;
      }
      case LayerKind::kSeparable: {
        const auto& s = std::get<SeparableSpec>(l.params);
        row.macs = spatial * s.c_in * s.k * s.k + spatial * s.c_out * s.c_in;
        break;
      }
      case LayerKind::kFusion:
        row.macs = 2 * o.numel();
        break;
      case LayerKind::kPool: {
        const auto& p = std::get<PoolSpec>(l.params).params;
        row.side_ops = o.numel() * p.k * p.k;
        break;
      }
      case LayerKind::kResize:
        row.side_ops = 4 * o.numel();
        break;
      case LayerKind::kAffine:
      case LayerKind::kActivation:
      case LayerKind::kAdd:
        row.side_ops = o.numel();
        break;
    }
    r.total_params += row.params;
    r.total_macs += row.macs;
    r.total_side_ops += row.side_ops;
    r.rows.push_back(std::move(row));
  }
  return r;
}

std::vector<ComplexityReport> resolution_sweep(const ModelGraph& g, const std::vector<Resolution>& resolutions) {
  if (resolutions.empty()) throw ConfigError("resolution sweep needs at least one resolution");
  std::vector<ComplexityReport> out;
  out.reserve(resolutions.size());
  for (const auto& res : resolutions) out.push_back(count_macs(g, res.h, res.w));
  return out;
}

namespace {

std::string shape_text(const Shape4& s) {
  return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

}  // namespace

void write_report_csv(const ComplexityReport& report, std::ostream& os) {
  os << "layer,kind,out_shape,params,macs\n";
  for (const auto& row : report.rows) {
    os << row.layer << ',' << layer_kind_name(row.kind) << ',' << shape_text(row.out_shape) << ',' << row.params
       << ',' << row.macs << '\n';
  }
  os << "total,,," << report.total_params << ',' << report.total_macs << '\n';
}

void write_sweep_csv(const std::vector<ComplexityReport>& reports, std::ostream& os) {
  os << "h,w,params,macs,flops\n";
  for (const auto& r : reports) {
    os << r.input.h << ',' << r.input.w << ',' << r.total_params << ',' << r.total_macs << ',' << r.flops() << '\n';
  }
}

void write_sweep_table(const std::vector<ComplexityReport>& reports, std::ostream& os) {
  char buf[64];
  std::string header = "                  Params";
  std::string macs = "MACs (G)    ";
  std::string flops = "FLOPs (G)   ";
  std::string side = "side ops (G)";
  std::snprintf(buf, sizeof(buf), "%10.3f M", reports.empty() ? 0.0 : reports[0].total_params / 1e6);
  macs += buf;
  flops += std::string(12, ' ');
  side += std::string(12, ' ');
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%12s", r.input.str().c_str());
    header += buf;
    std::snprintf(buf, sizeof(buf), "%12.3f", r.total_macs / 1e9);
    macs += buf;
    std::snprintf(buf, sizeof(buf), "%12.3f", r.flops() / 1e9);
    flops += buf;
    std::snprintf(buf, sizeof(buf), "%12.3f", r.total_side_ops / 1e9);
    side += buf;
  }
  os << header << '\n' << macs << '\n' << flops << '\n' << side << '\n';
}

}  // namespace bcpnet
