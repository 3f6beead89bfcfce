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
#include "bcpnet/graph.hpp"

#include <cmath>
#include <random>
#include <set>

namespace bcpnet {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv:
      return "conv";
    case LayerKind::kSeparable:
      return "separable";
    case LayerKind::kPool:
      return "pool";
    case LayerKind::kResize:
      return "resize";
    case LayerKind::kFusion:
      return "fusion";
    case LayerKind::kAffine:
      return "affine";
    case LayerKind::kActivation:
      return "activation";
    case LayerKind::kAdd:
      return "add";
  }
  return "?";
}

BackboneSchedule BackboneSchedule::defaults() {
  BackboneSchedule s;
  s.stem_channels = 8;
  s.stages = {{8, 1, 1, 1}, {16, 1, 2, 1}, {24, 1, 2, 2}, {48, 1, 2, 3}, {96, 4, 2, 6}};
  return s;
}

std::size_t ModelGraph::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ConfigError("unknown layer id '" + id + "'");
  return it->second;
}

std::size_t ModelGraph::channels_of(const std::string& id) const {
  if (id == kInputId) return 3;
  const LayerSpec& l = layers[index_of(id)];
  switch (l.kind) {
    case LayerKind::kConv:
      return std::get<ConvSpec>(l.params).c_out;
    case LayerKind::kSeparable:
      return std::get<SeparableSpec>(l.params).c_out;
    default:
      return channels_of(l.inputs.at(0));
  }
}

void ModelGraph::append(LayerSpec spec) {
  if (spec.id == kInputId || index_.count(spec.id)) throw ConfigError("duplicate layer id '" + spec.id + "'");
  for (const auto& in : spec.inputs) {
    if (in != kInputId && !index_.count(in)) {
      throw ConfigError("layer '" + spec.id + "' consumes '" + in + "' before it is defined");
    }
  }
  index_.emplace(spec.id, layers.size());
  layers.push_back(std::move(spec));
}

void ModelGraph::validate() const {
  std::set<std::string> seen;
  std::set<std::string> slots;
  for (const auto& l : layers) {
    for (const auto& in : l.inputs) {
      if (in != kInputId && !seen.count(in)) throw ConfigError("layer '" + l.id + "' breaks topological order");
    }
    if (l.kind == LayerKind::kResize) {
      const auto& like = std::get<ResizeSpec>(l.params).like;
      if (like != kInputId && !seen.count(like)) throw ConfigError("resize '" + l.id + "' targets a later layer");
    }
    if (!seen.insert(l.id).second) throw ConfigError("duplicate layer id '" + l.id + "'");
    for (const auto& s : param_slots(l)) {
      if (!slots.insert(s.name).second) throw ConfigError("duplicate parameter slot '" + s.name + "'");
    }
  }
  if (!output.empty() && !seen.count(output)) throw ConfigError("graph output is not a layer");
}

std::vector<ParamSlot> param_slots(const LayerSpec& l) {
  std::vector<ParamSlot> out;
  switch (l.kind) {
    case LayerKind::kConv: {
      const auto& c = std::get<ConvSpec>(l.params);
      out.push_back({l.id + ".weight", {c.c_out, c.c_in / c.groups, c.k, c.k}, true});
      if (c.bias) out.push_back({l.id + ".bias", {1, c.c_out, 1, 1}, true});
      break;
    }
    case LayerKind::kSeparable: {
      const auto& s = std::get<SeparableSpec>(l.params);
      out.push_back({l.id + ".dw.weight", {s.c_in, 1, s.k, s.k}, true});
      out.push_back({l.id + ".pw.weight", {s.c_out, s.c_in, 1, 1}, true});
      if (s.pw_bias) out.push_back({l.id + ".pw.bias", {1, s.c_out, 1, 1}, true});
      break;
    }
    case LayerKind::kAffine: {
      const auto& a = std::get<AffineSpec>(l.params);
      out.push_back({l.id + ".scale", {1, a.channels, 1, 1}, true});
      out.push_back({l.id + ".shift", {1, a.channels, 1, 1}, false});
      break;
    }
    case LayerKind::kFusion:
      out.push_back({l.id + ".theta", {1, 1, 1, 1}, false});
      out.push_back({l.id + ".sigma", {1, 1, 1, 1}, false});
      break;
    default:
      break;
  }
  return out;
}

std::vector<ParamSlot> param_slots(const ModelGraph& g) {
  std::vector<ParamSlot> out;
  for (const auto& l : g.layers) {
    auto s = param_slots(l);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<Shape4> infer_shapes(const ModelGraph& g, const Shape4& input) {
  validate_shape(input);
  std::vector<Shape4> shapes(g.layers.size());
  auto shape_of = [&](const std::string& id) -> const Shape4& {
    return id == kInputId ? input : shapes[g.index_of(id)];
  };
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    const Shape4& in = shape_of(l.inputs.at(0));
    switch (l.kind) {
      case LayerKind::kConv: {
        const auto& c = std::get<ConvSpec>(l.params);
        shapes[i] = conv_out_shape(in, {c.c_out, c.c_in / c.groups, c.k, c.k}, c.bias ? c.c_out : 0,
                                   {c.stride, c.padding, c.groups});
        break;
      }
      case LayerKind::kSeparable: {
        const auto& s = std::get<SeparableSpec>(l.params);
        if (in.c != s.c_in) throw ShapeError("separable '" + l.id + "' expects " + std::to_string(s.c_in) + " channels");
        shapes[i] = {in.n, s.c_out, in.h, in.w};
        break;
      }
      case LayerKind::kPool:
        shapes[i] = pool_out_shape(in, std::get<PoolSpec>(l.params).params);
        break;
      case LayerKind::kResize: {
        const Shape4& like = shape_of(std::get<ResizeSpec>(l.params).like);
        shapes[i] = {in.n, in.c, like.h, like.w};
        break;
      }
      case LayerKind::kFusion:
      case LayerKind::kAdd: {
        const Shape4& other = shape_of(l.inputs.at(1));
        if (other != in) {
          throw ShapeError("layer '" + l.id + "' joins " + in.str() + " with " + other.str());
        }
        shapes[i] = in;
        break;
      }
      case LayerKind::kAffine:
      case LayerKind::kActivation:
        shapes[i] = in;
        break;
    }
  }
  return shapes;
}

namespace {

// Appends layers while tracking channel counts.
class Builder {
 public:
  explicit Builder(ModelGraph& g) : g_(g) {}

  std::string conv(const std::string& id, const std::string& in, std::size_t c_out, std::size_t k,
                   std::size_t stride, bool depthwise, bool bias) {
    ConvSpec c;
    c.c_in = g_.channels_of(in);
    c.c_out = depthwise ? c.c_in : c_out;
    c.k = k;
    c.stride = stride;
    c.padding = k / 2;
    c.groups = depthwise ? c.c_in : 1;
    c.bias = bias;
    g_.append({id, LayerKind::kConv, c, {in}});
    return id;
  }

  std::string separable(const std::string& id, const std::string& in, std::size_t c_out) {
    SeparableSpec s;
    s.c_in = g_.channels_of(in);
    s.c_out = c_out;
    g_.append({id, LayerKind::kSeparable, s, {in}});
    return id;
  }

  std::string affine(const std::string& id, const std::string& in) {
    g_.append({id, LayerKind::kAffine, AffineSpec{g_.channels_of(in)}, {in}});
    return id;
  }

  std::string act(const std::string& id, const std::string& in, Unary kind) {
    g_.append({id, LayerKind::kActivation, ActivationSpec{kind}, {in}});
    return id;
  }

  std::string pool(const std::string& id, const std::string& in, const PoolParams& p) {
    g_.append({id, LayerKind::kPool, PoolSpec{p}, {in}});
    return id;
  }

  std::string resize(const std::string& id, const std::string& in, const std::string& like) {
    g_.append({id, LayerKind::kResize, ResizeSpec{like}, {in}});
    return id;
  }

  std::string fusion(const std::string& id, const std::string& s, const std::string& c) {
    g_.append({id, LayerKind::kFusion, FusionSpec{}, {s, c}});
    return id;
  }

  std::string add(const std::string& id, const std::string& a, const std::string& b) {
    g_.append({id, LayerKind::kAdd, AddSpec{}, {a, b}});
    return id;
  }

  // conv -> affine -> activation
  std::string conv_unit(const std::string& id, const std::string& in, std::size_t c_out, std::size_t k,
                        std::size_t stride, bool depthwise, bool bias, Unary kind) {
    conv(id + ".conv", in, c_out, k, stride, depthwise, bias);
    affine(id + ".affine", id + ".conv");
    return act(id + ".act", id + ".affine", kind);
  }

 private:
  ModelGraph& g_;
};

constexpr std::size_t kTapFactors[] = {2, 4, 8, 16, 32};

}  // namespace

ModelGraph build_backbone(const BackboneSchedule& schedule) {
  if (schedule.stages.size() != 5) {
    throw ConfigError("backbone schedule needs 5 stages reaching 1/32, got " + std::to_string(schedule.stages.size()));
  }
  if (schedule.stem_channels == 0) throw ConfigError("stem channels must be positive");
  std::size_t factor = 2;
  for (std::size_t s = 0; s < 5; ++s) {
    const auto& st = schedule.stages[s];
    if (st.channels == 0 || st.blocks == 0 || st.expansion == 0 || (st.stride != 1 && st.stride != 2)) {
      throw ConfigError("malformed backbone stage " + std::to_string(s + 1));
    }
    factor *= st.stride;
    if (factor != kTapFactors[s]) {
      throw ConfigError("backbone stage " + std::to_string(s + 1) + " lands at 1/" + std::to_string(factor) +
                        ", expected 1/" + std::to_string(kTapFactors[s]));
    }
  }

  ModelGraph g;
  Builder b(g);
  std::string x = b.conv_unit("stem", kInputId, schedule.stem_channels, 3, 2, false, false, Unary::kRelu6);
  for (std::size_t s = 0; s < 5; ++s) {
    const auto& st = schedule.stages[s];
    for (std::size_t i = 0; i < st.blocks; ++i) {
      const std::string id = "s" + std::to_string(s + 1) + ".b" + std::to_string(i);
      const std::size_t stride = i == 0 ? st.stride : 1;
      const std::size_t c_in = g.channels_of(x);
      std::string y = x;
      if (st.expansion != 1) {
        y = b.conv_unit(id + ".expand", y, c_in * st.expansion, 1, 1, false, true, Unary::kRelu6);
      }
      y = b.conv_unit(id + ".dw", y, 0, 3, stride, true, false, Unary::kRelu6);
      b.conv(id + ".project.conv", y, st.channels, 1, 1, false, true);
      y = b.affine(id + ".project.affine", id + ".project.conv");
      if (stride == 1 && c_in == st.channels) y = b.add(id + ".add", x, y);
      x = y;
    }
    g.taps["layer" + std::to_string(s + 1)] = x;
  }
  g.validate();
  return g;
}

void build_context_pooling(ModelGraph& g, const AblationConfig& cfg) {
  if (!g.taps.count("layer5")) throw ConfigError("context pooling needs Layer-5");
  if (cfg.context_pool_k != 3 && cfg.context_pool_k != 5) {
    throw ConfigError("context pool kernel must be 3 or 5, got " + std::to_string(cfg.context_pool_k));
  }
  Builder b(g);
  PoolParams p{cfg.context_pool_kind, cfg.context_pool_k, 2, cfg.context_pool_k / 2};
  const std::string p6 = b.pool("ctx.pool6", g.taps.at("layer5"), p);
  const std::string p7 = b.pool("ctx.pool7", p6, p);
  g.taps["p6"] = p6;
  g.taps["p7"] = p7;
  g.pyramid_levels = {{g.taps.at("layer3"), 8}, {g.taps.at("layer4"), 16}, {g.taps.at("layer5"), 32},
                      {p6, 64}, {p7, 128}};
}

void build_bcp_module(ModelGraph& g, std::size_t fusion_width) {
  constexpr std::size_t kFactors[] = {8, 16, 32, 64, 128};
  if (g.pyramid_levels.size() != 5) throw ConfigError("BCP module needs pyramid levels 1/8 .. 1/128");
  for (std::size_t i = 0; i < 5; ++i) {
    if (g.pyramid_levels[i].factor != kFactors[i]) {
      throw ConfigError("BCP module missing pyramid level 1/" + std::to_string(kFactors[i]));
    }
  }
  if (fusion_width == 0) throw ConfigError("fusion width must be positive");
  Builder b(g);
  const std::size_t levels = 5;
  auto tag = [](std::size_t f) { return std::to_string(f); };

  std::vector<std::string> lat(levels);
  for (std::size_t i = 0; i < levels; ++i) {
    const std::string id = "bcp.lat" + tag(kFactors[i]);
    lat[i] = b.conv_unit(id, g.pyramid_levels[i].layer, fusion_width, 1, 1, false, true, Unary::kRelu);
    g.taps["lat" + tag(kFactors[i])] = lat[i];
  }

  // fuse -> separable -> affine -> relu
  auto fuse_block = [&](const std::string& id, const std::string& same, const std::string& moved) {
    b.fusion(id + ".fuse", same, moved);
    b.separable(id + ".sep", id + ".fuse", fusion_width);
    b.affine(id + ".affine", id + ".sep");
    return b.act(id + ".act", id + ".affine", Unary::kRelu);
  };

  // Top-down: context flows from the deepest level toward 1/8.
  auto top_down = [&](const std::string& path, const std::vector<std::string>& in) {
    std::vector<std::string> out(levels);
    out[levels - 1] = in[levels - 1];
    for (std::size_t i = levels - 1; i-- > 0;) {
      const std::string id = "bcp." + path + ".l" + tag(kFactors[i]);
      const std::string up = b.resize(id + ".resize", out[i + 1], in[i]);
      out[i] = fuse_block(id, in[i], up);
      g.taps[path + "@" + tag(kFactors[i])] = out[i];
    }
    return out;
  };

  const auto td1 = top_down("td1", lat);

  // Bottom-up: spatial detail flows from 1/8 toward 1/128.
  std::vector<std::string> bu(levels);
  bu[0] = td1[0];
  const PoolParams down{PoolKind::kMax, 3, 2, 1};
  for (std::size_t i = 1; i < levels; ++i) {
    const std::string id = "bcp.bu.l" + tag(kFactors[i]);
    const std::string pooled = b.pool(id + ".pool", bu[i - 1], down);
    bu[i] = fuse_block(id, td1[i], pooled);
    g.taps["bu@" + tag(kFactors[i])] = bu[i];
  }

  const auto td2 = top_down("td2", bu);
  g.classifier_input = td2[0];
}

std::size_t fusion_sites_per_path(const ModelGraph& g) {
  return g.pyramid_levels.empty() ? 0 : g.pyramid_levels.size() - 1;
}

void build_classifier(ModelGraph& g, std::size_t num_classes) {
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (g.classifier_input.empty()) {
    if (!g.taps.count("layer3")) throw ConfigError("classifier needs Layer-3 or a BCP output");
    g.classifier_input = g.taps.at("layer3");
  }
  Builder b(g);
  b.conv("cls.conv", g.classifier_input, num_classes, 1, 1, false, true);
  g.output = b.resize("cls.resize", "cls.conv", kInputId);
  g.num_classes = num_classes;
  g.validate();
}

ModelGraph build_bcpnet(const ModelConfig& cfg) {
  ModelGraph g = build_backbone(cfg.backbone);
  g.variant = cfg.ablation;
  if (cfg.ablation.use_bcp) {
    build_context_pooling(g, cfg.ablation);
    build_bcp_module(g, cfg.fusion_width);
  } else if (cfg.ablation.context_pool_k != 3 && cfg.ablation.context_pool_k != 5) {
    throw ConfigError("context pool kernel must be 3 or 5");
  }
  build_classifier(g, cfg.num_classes);
  return g;
}

ModelGraph build_bcpnet(const AblationConfig& cfg, std::size_t num_classes) {
  ModelConfig mc;
  mc.ablation = cfg;
  mc.num_classes = num_classes;
  return build_bcpnet(mc);
}

template <typename T>
WeightStore<T> init_weights(const ModelGraph& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WeightStore<T> store;
  for (const auto& slot : param_slots(g)) {
    Tensor4<T> t(slot.shape);
    const std::string& n = slot.name;
    auto ends_with = [&](const char* suffix) {
      const std::string s(suffix);
      return n.size() >= s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0;
    };
    if (ends_with(".weight")) {
      const double fan_in = static_cast<double>(slot.shape.c * slot.shape.h * slot.shape.w);
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    } else if (ends_with(".scale")) {
      t.fill(T(1));
    } else if (ends_with(".theta") || ends_with(".sigma")) {
      t.fill(T(0.5));
    }
    store.emplace(n, std::move(t));
  }
  return store;
}

template <typename T>
const Tensor4<T>& weight_at(const WeightStore<T>& store, const std::string& name, const Shape4& expect) {
  auto it = store.find(name);
  if (it == store.end()) throw WeightStoreError("missing weight '" + name + "'");
  if (it->second.shape() != expect) {
    throw WeightStoreError("weight '" + name + "' has shape " + it->second.shape().str() + ", expected " +
                           expect.str());
  }
  return it->second;
}

template <typename T>
const Tensor4<T>& ForwardState<T>::activation(const std::string& layer_id) const {
  if (layer_id == kInputId) return input;
  const Tensor4<T>& a = activations.at(graph->index_of(layer_id));
  if (a.empty()) throw StateError("activation '" + layer_id + "' was not retained");
  return a;
}

template <typename T>
const Tensor4<T>& ForwardState<T>::logits() const {
  return activation(graph->output);
}

template <typename T>
const Tensor4<T>& ForwardState<T>::tap(const std::string& name) const {
  auto it = graph->taps.find(name);
  if (it == graph->taps.end()) throw ConfigError("unknown tap '" + name + "'");
  return activation(it->second);
}

namespace {

template <typename T>
Tensor4<T> run_layer(const LayerSpec& l, const std::vector<const Tensor4<T>*>& in, const WeightStore<T>& w,
                     const Shape4& out_shape) {
  switch (l.kind) {
    case LayerKind::kConv: {
      const auto& c = std::get<ConvSpec>(l.params);
      const auto& wt = weight_at(w, l.id + ".weight", {c.c_out, c.c_in / c.groups, c.k, c.k});
      std::span<const T> bias;
      if (c.bias) bias = weight_at(w, l.id + ".bias", {1, c.c_out, 1, 1}).data();
      return conv2d<T>(*in[0], wt, bias, {c.stride, c.padding, c.groups});
    }
    case LayerKind::kSeparable: {
      const auto& s = std::get<SeparableSpec>(l.params);
      const auto& dw = weight_at(w, l.id + ".dw.weight", {s.c_in, 1, s.k, s.k});
      const auto& pw = weight_at(w, l.id + ".pw.weight", {s.c_out, s.c_in, 1, 1});
      std::span<const T> bias;
      if (s.pw_bias) bias = weight_at(w, l.id + ".pw.bias", {1, s.c_out, 1, 1}).data();
      const Tensor4<T> mid = conv2d<T>(*in[0], dw, {}, {1, s.k / 2, s.c_in});
      return conv2d<T>(mid, pw, bias, {});
    }
    case LayerKind::kPool:
      return pool2d(*in[0], std::get<PoolSpec>(l.params).params);
    case LayerKind::kResize:
      return bilinear_resize(*in[0], out_shape.h, out_shape.w);
    case LayerKind::kFusion: {
      FusionWeights<T> fw{weight_at(w, l.id + ".theta", {1, 1, 1, 1})[0],
                          weight_at(w, l.id + ".sigma", {1, 1, 1, 1})[0]};
      return weighted_fusion(*in[0], *in[1], fw);
    }
    case LayerKind::kAffine: {
      const std::size_t c = std::get<AffineSpec>(l.params).channels;
      return channel_affine<T>(*in[0], weight_at(w, l.id + ".scale", {1, c, 1, 1}).data(),
                               weight_at(w, l.id + ".shift", {1, c, 1, 1}).data());
    }
    case LayerKind::kActivation:
      return map_unary(*in[0], std::get<ActivationSpec>(l.params).kind);
    case LayerKind::kAdd:
      return add(*in[0], *in[1]);
  }
  throw ConfigError("unhandled layer kind");
}

}  // namespace

template <typename T>
ForwardState<T> forward(const ModelGraph& g, const WeightStore<T>& weights, const Tensor4<T>& x, ForwardMode mode) {
  if (g.output.empty()) throw ConfigError("graph has no classifier output");
  if (x.shape().c != 3) throw ShapeError("forward expects 3 input channels, got " + x.shape().str());
  const auto shapes = infer_shapes(g, x.shape());
  ForwardState<T> st;
  st.graph = &g;
  st.input = x;
  st.mode = mode;
  st.activations.resize(g.layers.size());

  std::vector<std::size_t> last_use(g.layers.size(), 0);
  std::vector<bool> keep(g.layers.size(), mode == ForwardMode::kRetain);
  if (mode == ForwardMode::kInference) {
    for (std::size_t i = 0; i < g.layers.size(); ++i)
      for (const auto& in : g.layers[i].inputs)
        if (in != kInputId) last_use[g.index_of(in)] = i;
    for (const auto& [name, id] : g.taps) keep[g.index_of(id)] = true;
    keep[g.index_of(g.output)] = true;
  }

  std::vector<const Tensor4<T>*> ins;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    ins.clear();
    for (const auto& in : l.inputs) ins.push_back(in == kInputId ? &st.input : &st.activations[g.index_of(in)]);
    st.activations[i] = run_layer<T>(l, ins, weights, shapes[i]);
    if (mode == ForwardMode::kInference) {
      for (const auto& in : l.inputs) {
        if (in == kInputId) continue;
        const std::size_t j = g.index_of(in);
        if (!keep[j] && last_use[j] == i) st.activations[j].release();
      }
    }
  }
  return st;
}

#define BCPNET_INSTANTIATE(T)                                                                                 \
  template WeightStore<T> init_weights<T>(const ModelGraph&, std::uint64_t);                                  \
  template const Tensor4<T>& weight_at<T>(const WeightStore<T>&, const std::string&, const Shape4&);          \
  template struct ForwardState<T>;                                                                            \
  template ForwardState<T> forward<T>(const ModelGraph&, const WeightStore<T>&, const Tensor4<T>&, ForwardMode);

BCPNET_INSTANTIATE(float)
BCPNET_INSTANTIATE(double)
#undef BCPNET_INSTANTIATE

}  // namespace bcpnet
