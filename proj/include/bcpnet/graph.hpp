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
#ifndef BCPNET_GRAPH_HPP_
#define BCPNET_GRAPH_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "bcpnet/nnops.hpp"
#include "bcpnet/tensor.hpp"

namespace bcpnet {

// Reserved id of the graph input in LayerSpec::inputs.
inline constexpr const char* kInputId = "input";

enum class LayerKind { kConv, kSeparable, kPool, kResize, kFusion, kAffine, kActivation, kAdd };

const char* layer_kind_name(LayerKind kind);

struct ConvSpec {
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::size_t k = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  bool bias = false;
};

// Depthwise k x k (stride 1, same padding, no bias) then pointwise 1x1.
struct SeparableSpec {
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::size_t k = 3;
  bool pw_bias = true;
};

struct PoolSpec {
  PoolParams params;
};

// Resizes the single input to the spatial size of layer `like`.
struct ResizeSpec {
  std::string like;
};

// inputs = {S, C}; owns the scalar pair (theta, sigma).
struct FusionSpec {};

struct AffineSpec {
  std::size_t channels = 0;
};

struct ActivationSpec {
  Unary kind = Unary::kRelu;
};

struct AddSpec {};

using LayerParams =
    std::variant<ConvSpec, SeparableSpec, PoolSpec, ResizeSpec, FusionSpec, AffineSpec, ActivationSpec, AddSpec>;

struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::kConv;
  LayerParams params;
  std::vector<std::string> inputs;
};

struct BackboneStage {
  std::size_t channels = 0;
  std::size_t blocks = 0;
  std::size_t stride = 1;
  std::size_t expansion = 6;
  bool operator==(const BackboneStage&) const = default;
};

// Stem is a 3x3 stride-2 conv; the five stages emit Layer-1 .. Layer-5 at
// downsample factors 2, 4, 8, 16, 32.
struct BackboneSchedule {
  std::size_t stem_channels = 8;
  std::vector<BackboneStage> stages;

  static BackboneSchedule defaults();
  bool operator==(const BackboneSchedule&) const = default;
};

struct AblationConfig {
  bool use_bcp = true;
  PoolKind context_pool_kind = PoolKind::kMax;
  std::size_t context_pool_k = 3;
  bool operator==(const AblationConfig&) const = default;
};

struct ModelConfig {
  AblationConfig ablation;
  BackboneSchedule backbone = BackboneSchedule::defaults();
  std::size_t fusion_width = 96;
  std::size_t num_classes = 19;
  bool operator==(const ModelConfig&) const = default;
};

struct PyramidLevel {
  std::string layer;
  std::size_t factor = 1;
};

class ModelGraph {
 public:
  std::vector<LayerSpec> layers;
  // Levels handed to the BCP module, shallow to deep.
  std::vector<PyramidLevel> pyramid_levels;
  std::string classifier_input;
  std::string output;
  std::size_t num_classes = 0;
  AblationConfig variant;
  // Named taps (layer1..layer5, p6, p7, BCP path outputs) -> layer id.
  std::map<std::string, std::string> taps;

  // Index of a layer id; throws ConfigError when absent.
  std::size_t index_of(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  std::size_t channels_of(const std::string& id) const;

  void append(LayerSpec spec);
  // Topological order, known inputs, unique ids and parameter slot names.
  void validate() const;

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameter slot owned by a layer. Fusion scalars and affine shifts are
// excluded from weight decay.
struct ParamSlot {
  std::string name;
  Shape4 shape;
  bool decay = true;
};

std::vector<ParamSlot> param_slots(const LayerSpec& layer);
std::vector<ParamSlot> param_slots(const ModelGraph& g);

// Output shape of every layer for an input of shape (n, 3, h, w).
std::vector<Shape4> infer_shapes(const ModelGraph& g, const Shape4& input);

// Builders. Each appends to the graph it receives.
ModelGraph build_backbone(const BackboneSchedule& schedule);
void build_context_pooling(ModelGraph& g, const AblationConfig& cfg);
void build_bcp_module(ModelGraph& g, std::size_t fusion_width);
void build_classifier(ModelGraph& g, std::size_t num_classes);
ModelGraph build_bcpnet(const AblationConfig& cfg, std::size_t num_classes);
ModelGraph build_bcpnet(const ModelConfig& cfg);

// Number of fusion sites per BCP path (adjacent-level pairs).
std::size_t fusion_sites_per_path(const ModelGraph& g);

template <typename T>
using WeightStore = std::map<std::string, Tensor4<T>>;

// Conv weights ~ N(0, 2 / fan_in), biases 0, affine (1, 0), fusion (0.5, 0.5).
template <typename T>
WeightStore<T> init_weights(const ModelGraph& g, std::uint64_t seed);

template <typename T>
WeightStore<T> cast_store(const WeightStore<double>& src) {
  WeightStore<T> out;
  for (const auto& [k, v] : src) out.emplace(k, v.template cast<T>());
  return out;
}

template <typename T>
WeightStore<T> cast_store(const WeightStore<float>& src) {
  WeightStore<T> out;
  for (const auto& [k, v] : src) out.emplace(k, v.template cast<T>());
  return out;
}

// Looks up a slot and checks its shape; throws WeightStoreError.
template <typename T>
const Tensor4<T>& weight_at(const WeightStore<T>& store, const std::string& name, const Shape4& expect);

enum class ForwardMode {
  // Keep every activation (needed by backward).
  kRetain,
  // Free activations after their last consumer, except taps and the output.
  kInference,
};

template <typename T>
struct ForwardState {
  const ModelGraph* graph = nullptr;
  Tensor4<T> input;
  std::vector<Tensor4<T>> activations;
  ForwardMode mode = ForwardMode::kRetain;

  const Tensor4<T>& logits() const;
  const Tensor4<T>& tap(const std::string& name) const;
  const Tensor4<T>& activation(const std::string& layer_id) const;
};

template <typename T>
ForwardState<T> forward(const ModelGraph& g, const WeightStore<T>& weights, const Tensor4<T>& x,
                        ForwardMode mode = ForwardMode::kRetain);

}  // namespace bcpnet

#endif  // BCPNET_GRAPH_HPP_
