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
#ifndef BCPNET_AUTOGRAD_HPP_
#define BCPNET_AUTOGRAD_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bcpnet/graph.hpp"
#include "bcpnet/nnops.hpp"

namespace bcpnet {

template <typename T>
struct ConvGrads {
  Tensor4<T> dx;  // empty when not requested
  Tensor4<T> dweight;
  std::vector<T> dbias;  // empty when the conv has no bias
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const Tensor4<T>& weight, bool has_bias, const ConvGeometry& geometry,
                             const Tensor4<T>& dy, bool need_dx = true);

template <typename T>
struct SeparableGrads {
  Tensor4<T> dx;
  Tensor4<T> ddw;
  Tensor4<T> dpw;
  std::vector<T> dpw_bias;
};

template <typename T>
SeparableGrads<T> separable_conv_backward(const Tensor4<T>& x, const ConvParams<T>& dw, const ConvParams<T>& pw,
                                          const Tensor4<T>& dy);

// Max routes each output gradient to the first window maximum in row-major
// order; avg spreads it evenly over the in-bounds taps.
template <typename T>
Tensor4<T> pool2d_backward(const Tensor4<T>& x, const PoolParams& p, const Tensor4<T>& dy);

// Transpose of the bilinear interpolation weights.
template <typename T>
Tensor4<T> bilinear_resize_backward(const Tensor4<T>& dy, std::size_t in_h, std::size_t in_w);

template <typename T>
struct FusionGrads {
  Tensor4<T> ds;
  Tensor4<T> dc;
  T dtheta = T(0);
  T dsigma = T(0);
};

template <typename T>
FusionGrads<T> weighted_fusion_backward(const Tensor4<T>& s, const Tensor4<T>& c, const FusionWeights<T>& w,
                                        const Tensor4<T>& dy);

template <typename T>
struct AffineGrads {
  Tensor4<T> dx;
  std::vector<T> dscale;
  std::vector<T> dshift;
};

template <typename T>
AffineGrads<T> channel_affine_backward(const Tensor4<T>& x, std::span<const T> scale, const Tensor4<T>& dy);

// Derivative taken as 0 at the kinks.
template <typename T>
Tensor4<T> unary_backward(const Tensor4<T>& x, Unary kind, const Tensor4<T>& dy);

template <typename T>
struct GradStore {
  WeightStore<T> params;
  Tensor4<T> input;
};

// Reverse-topological accumulation through a retained forward pass.
// `upstream` is d(loss)/d(logits). Slots the pass never reaches stay zero.
template <typename T>
GradStore<T> backward(const ModelGraph& g, const WeightStore<T>& weights, const ForwardState<T>& state,
                      const Tensor4<T>& upstream);

// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  // Coordinates that were checked, in check order.
  std::vector<std::size_t> coords;
};

// Central differences (f(w + eps e_i) - f(w - eps e_i)) / (2 eps). With
// max_coords > 0 and fewer than w.size(), a seeded sample of coordinates is
// checked. Throws NumericError when f is non-finite.
FiniteDiffResult finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                   std::span<const double> w, std::span<const double> analytic, double eps,
                                   std::size_t max_coords = 0, std::uint64_t seed = 0);

struct SlotCheck {
  std::string slot;
  std::size_t numel = 0;
  std::size_t checked = 0;
  // Probes that crossed an activation kink or flipped a max-pool argmax.
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
};

struct GraphGradCheck {
  std::vector<SlotCheck> slots;
  SlotCheck input;
  double max_rel_error = 0.0;
};

// Default initialization with every bias and shift drawn from
// N(0, offset_stddev) and fusion scalars at 1. Zero offsets park many
// pre-activations exactly on a relu kink, where central differences are
// meaningless. At the training init of 0.5 the deepest fusion gradients are
// small enough for loss roundoff to dominate the difference quotient.
WeightStore<double> gradcheck_weights(const ModelGraph& g, std::uint64_t seed, double offset_stddev = 0.1);

// Checks every parameter slot (and the input) of a graph against central
// differences of the mean cross-entropy loss, in double precision. Up to
// max_coords_per_slot seeded coordinates per slot (0 = all); a coordinate
// whose probes change any activation region or max-pool argmax is skipped
// and counted.
GraphGradCheck gradcheck_graph(const ModelGraph& g, const WeightStore<double>& weights, const Tensor4<double>& x,
                               const LabelMap& labels, double eps = 1e-5, std::size_t max_coords_per_slot = 6,
                               std::uint64_t seed = 0);

}  // namespace bcpnet

#endif  // BCPNET_AUTOGRAD_HPP_
