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
#ifndef BCPNET_NNOPS_HPP_
#define BCPNET_NNOPS_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "bcpnet/tensor.hpp"

namespace bcpnet {

inline constexpr std::int32_t kIgnoreIndex = 255;

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

// Weight layout is (c_out, c_in / groups, k, k). An empty bias means none.
template <typename T>
struct ConvParams {
  Tensor4<T> weight;
  std::vector<T> bias;
  ConvGeometry geometry;
};

enum class PoolKind { kMax, kAvg };

struct PoolParams {
  PoolKind kind = PoolKind::kMax;
  std::size_t k = 3;
  std::size_t stride = 2;
  std::size_t padding = 1;
};

const char* pool_kind_name(PoolKind kind);

// Learnable scalars of the weighted sum F = theta * S + sigma * C.
template <typename T>
struct FusionWeights {
  T theta = T(1);
  T sigma = T(1);
};

// Per-pixel integer labels laid out (n, h, w).
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(std::size_t n, std::size_t h, std::size_t w, std::int32_t fill = 0)
      : n_(n), h_(h), w_(w), data_(n * h * w, fill) {}
  LabelMap(std::size_t n, std::size_t h, std::size_t w, std::vector<std::int32_t> data);

  std::size_t n() const { return n_; }
  std::size_t h() const { return h_; }
  std::size_t w() const { return w_; }
  std::size_t size() const { return data_.size(); }

  std::int32_t& at(std::size_t n, std::size_t y, std::size_t x) { return data_[(n * h_ + y) * w_ + x]; }
  std::int32_t at(std::size_t n, std::size_t y, std::size_t x) const { return data_[(n * h_ + y) * w_ + x]; }
  std::span<std::int32_t> data() { return data_; }
  std::span<const std::int32_t> data() const { return data_; }

  bool operator==(const LabelMap&) const = default;

 private:
  std::size_t n_ = 0, h_ = 0, w_ = 0;
  std::vector<std::int32_t> data_;
};

// floor((in + 2 * padding - k) / stride) + 1; throws GeometryError when the
// window does not fit.
std::size_t window_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding);

// Validates weight/bias/group consistency against an input channel count and
// returns the output shape.
Shape4 conv_out_shape(const Shape4& in, const Shape4& weight, std::size_t bias_size, const ConvGeometry& g);

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& weight, std::span<const T> bias,
                  const ConvGeometry& geometry);

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const ConvParams<T>& p) {
  return conv2d<T>(x, p.weight, p.bias, p.geometry);
}

// Depthwise conv followed by pointwise conv.
template <typename T>
Tensor4<T> separable_conv(const Tensor4<T>& x, const ConvParams<T>& dw, const ConvParams<T>& pw);

Shape4 pool_out_shape(const Shape4& in, const PoolParams& p);

// Max ignores padded positions; avg divides by the number of in-bounds taps.
template <typename T>
Tensor4<T> pool2d(const Tensor4<T>& x, const PoolParams& p);

// Half-pixel bilinear sampling: src = (dst + 0.5) * in / out - 0.5, clamped to
// the border.
template <typename T>
Tensor4<T> bilinear_resize(const Tensor4<T>& x, std::size_t out_h, std::size_t out_w);

// Source coordinate table shared by resize forward and backward.
struct ResizeTap {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double frac = 0.0;
};
std::vector<ResizeTap> resize_taps(std::size_t in, std::size_t out);

template <typename T>
Tensor4<T> weighted_fusion(const Tensor4<T>& s, const Tensor4<T>& c, const FusionWeights<T>& w);

// y = scale[c] * x + shift[c].
template <typename T>
Tensor4<T> channel_affine(const Tensor4<T>& x, std::span<const T> scale, std::span<const T> shift);

template <typename T>
Tensor4<T> add(const Tensor4<T>& x, const Tensor4<T>& y);

template <typename T>
struct LossResult {
  T loss = T(0);
  Tensor4<T> grad;
  std::size_t valid_pixels = 0;
};

// Mean cross-entropy over pixels whose label is not ignore_index. With no
// valid pixel the loss and gradient are zero.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor4<T>& logits, const LabelMap& labels,
                                    std::int32_t ignore_index = kIgnoreIndex);

// Ties resolve to the lowest class index.
template <typename T>
LabelMap argmax_labels(const Tensor4<T>& logits);

}  // namespace bcpnet

#endif  // BCPNET_NNOPS_HPP_
