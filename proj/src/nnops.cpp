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
#include "bcpnet/nnops.hpp"

#include <algorithm>
#include <cmath>

#include "nnops_internal.hpp"

namespace bcpnet {

const char* pool_kind_name(PoolKind kind) { return kind == PoolKind::kMax ? "max" : "avg"; }

LabelMap::LabelMap(std::size_t n, std::size_t h, std::size_t w, std::vector<std::int32_t> data)
    : n_(n), h_(h), w_(w), data_(std::move(data)) {
  if (data_.size() != n * h * w) throw ShapeError("label map data length does not match (n,h,w)");
}

std::size_t window_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw GeometryError("stride must be positive");
  if (in + 2 * padding < k) {
    throw GeometryError("window " + std::to_string(k) + " does not fit input " + std::to_string(in) +
                        " with padding " + std::to_string(padding));
  }
  return (in + 2 * padding - k) / stride + 1;
}

Shape4 conv_out_shape(const Shape4& in, const Shape4& weight, std::size_t bias_size, const ConvGeometry& g) {
  if (g.groups == 0) throw ShapeError("conv groups must be positive");
  if (weight.h != weight.w || weight.h % 2 == 0) {
    throw ShapeError("conv kernel must be square and odd, got " + weight.str());
  }
  if (in.c % g.groups != 0 || weight.n % g.groups != 0) {
    throw ShapeError("channels " + std::to_string(in.c) + "->" + std::to_string(weight.n) +
                     " not divisible by groups " + std::to_string(g.groups));
  }
  if (weight.c * g.groups != in.c) {
    throw ShapeError("weight " + weight.str() + " expects " + std::to_string(weight.c * g.groups) +
                     " input channels, got " + std::to_string(in.c));
  }
  if (bias_size != 0 && bias_size != weight.n) {
    throw ShapeError("bias length " + std::to_string(bias_size) + " != c_out " + std::to_string(weight.n));
  }
  return {in.n, weight.n, window_out_size(in.h, weight.h, g.stride, g.padding),
          window_out_size(in.w, weight.w, g.stride, g.padding)};
}

namespace internal {

WindowRange valid_range(std::size_t out, std::size_t in, std::size_t offset, std::size_t stride,
                        std::size_t padding) {
  // index = o * stride + offset - padding must land in [0, in).
  const auto s = static_cast<std::ptrdiff_t>(stride);
  const auto shift = static_cast<std::ptrdiff_t>(offset) - static_cast<std::ptrdiff_t>(padding);
  std::ptrdiff_t lo = 0;
  if (shift < 0) lo = (-shift + s - 1) / s;
  std::ptrdiff_t hi_incl = (static_cast<std::ptrdiff_t>(in) - 1 - shift);
  if (hi_incl < 0) return {0, 0, shift};
  hi_incl /= s;
  std::ptrdiff_t hi = std::min<std::ptrdiff_t>(hi_incl + 1, static_cast<std::ptrdiff_t>(out));
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi), shift};
}

}  // namespace internal

using internal::valid_range;
using internal::WindowRange;

namespace {

constexpr std::size_t kPointwiseTile = 2048;

template <typename T>
void pointwise_forward(const Tensor4<T>& x, const Tensor4<T>& weight, std::span<const T> bias, Tensor4<T>& out) {
  const std::size_t cin = x.shape().c;
  const std::size_t cout = weight.shape().n;
  const std::size_t hw = x.shape().plane();
  const T* wdata = weight.data().data();
  for (std::size_t n = 0; n < x.shape().n; ++n) {
    for (std::size_t p0 = 0; p0 < hw; p0 += kPointwiseTile) {
      const std::size_t len = std::min(kPointwiseTile, hw - p0);
      for (std::size_t oc = 0; oc < cout; ++oc) {
        T* o = out.plane(n, oc) + p0;
        const T b = bias.empty() ? T(0) : bias[oc];
        for (std::size_t p = 0; p < len; ++p) o[p] = b;
        const T* wrow = wdata + oc * cin;
        for (std::size_t ic = 0; ic < cin; ++ic) {
          const T wv = wrow[ic];
          const T* in = x.plane(n, ic) + p0;
          for (std::size_t p = 0; p < len; ++p) o[p] += wv * in[p];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& weight, std::span<const T> bias,
                  const ConvGeometry& g) {
  const Shape4 os = conv_out_shape(x.shape(), weight.shape(), bias.size(), g);
  Tensor4<T> out(os);
  const std::size_t k = weight.shape().h;
  if (k == 1 && g.stride == 1 && g.padding == 0 && g.groups == 1) {
    pointwise_forward(x, weight, bias, out);
    return out;
  }
  const Shape4& is = x.shape();
  const std::size_t cin_g = weight.shape().c;
  const std::size_t cout_g = os.c / g.groups;
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t oc = 0; oc < os.c; ++oc) {
      const std::size_t grp = oc / cout_g;
      T* o = out.plane(n, oc);
      const T b = bias.empty() ? T(0) : bias[oc];
      std::fill(o, o + os.plane(), b);
      for (std::size_t icg = 0; icg < cin_g; ++icg) {
        const T* in = x.plane(n, grp * cin_g + icg);
        for (std::size_t ky = 0; ky < k; ++ky) {
          const WindowRange ry = valid_range(os.h, is.h, ky, g.stride, g.padding);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const WindowRange rx = valid_range(os.w, is.w, kx, g.stride, g.padding);
            const T wv = weight.at(oc, icg, ky, kx);
            for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride) + ry.shift;
              const T* irow = in + iy * static_cast<std::ptrdiff_t>(is.w);
              T* orow = o + oy * os.w;
              if (g.stride == 1) {
                const T* src = irow + rx.shift;
                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += wv * src[ox];
              } else {
                for (std::size_t ox = rx.lo; ox < rx.hi; ++ox)
                  orow[ox] += wv * irow[static_cast<std::ptrdiff_t>(ox * g.stride) + rx.shift];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> separable_conv(const Tensor4<T>& x, const ConvParams<T>& dw, const ConvParams<T>& pw) {
  if (dw.geometry.groups != x.shape().c || dw.weight.shape().n != x.shape().c || dw.weight.shape().c != 1) {
    throw ShapeError("separable_conv: depthwise stage must have groups == c_out == c_in");
  }
  if (pw.weight.shape().h != 1 || pw.geometry.groups != 1) {
    throw ShapeError("separable_conv: pointwise stage must be 1x1 with groups 1");
  }
  return conv2d(conv2d(x, dw), pw);
}

Shape4 pool_out_shape(const Shape4& in, const PoolParams& p) {
  if (p.k % 2 == 0 || p.padding >= p.k) {
    throw GeometryError("pool kernel must be odd with padding < k");
  }
  return {in.n, in.c, window_out_size(in.h, p.k, p.stride, p.padding),
          window_out_size(in.w, p.k, p.stride, p.padding)};
}

template <typename T>
Tensor4<T> pool2d(const Tensor4<T>& x, const PoolParams& p) {
  const Shape4 os = pool_out_shape(x.shape(), p);
  const Shape4& is = x.shape();
  Tensor4<T> out(os);
  std::vector<internal::Window> rows(os.h), cols(os.w);
  for (std::size_t oy = 0; oy < os.h; ++oy) rows[oy] = internal::window_at(oy, is.h, p.k, p.stride, p.padding);
  for (std::size_t ox = 0; ox < os.w; ++ox) cols[ox] = internal::window_at(ox, is.w, p.k, p.stride, p.padding);
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      const T* in = x.plane(n, c);
      T* o = out.plane(n, c);
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        const auto [y0, y1] = rows[oy];
        for (std::size_t ox = 0; ox < os.w; ++ox) {
          const auto [x0, x1] = cols[ox];
          if (p.kind == PoolKind::kMax) {
            T best = in[y0 * is.w + x0];
            for (std::size_t y = y0; y < y1; ++y)
              for (std::size_t xx = x0; xx < x1; ++xx) {
                const T v = in[y * is.w + xx];
                if (v > best) best = v;
              }
            o[oy * os.w + ox] = best;
          } else {
            T sum = T(0);
            for (std::size_t y = y0; y < y1; ++y)
              for (std::size_t xx = x0; xx < x1; ++xx) sum += in[y * is.w + xx];
            o[oy * os.w + ox] = sum / static_cast<T>((y1 - y0) * (x1 - x0));
          }
        }
      }
    }
  }
  return out;
}

std::vector<ResizeTap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<ResizeTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double max_src = static_cast<double>(in - 1);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, max_src);
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps[d].lo = lo;
    taps[d].hi = std::min(lo + 1, in - 1);
    taps[d].frac = src - static_cast<double>(lo);
  }
  return taps;
}

template <typename T>
Tensor4<T> bilinear_resize(const Tensor4<T>& x, std::size_t out_h, std::size_t out_w) {
  const Shape4& is = x.shape();
  Tensor4<T> out(Shape4{is.n, is.c, out_h, out_w});
  const auto ty = resize_taps(is.h, out_h);
  const auto tx = resize_taps(is.w, out_w);
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      const T* in = x.plane(n, c);
      T* o = out.plane(n, c);
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        const T ly = static_cast<T>(ty[oy].frac);
        const T* r0 = in + ty[oy].lo * is.w;
        const T* r1 = in + ty[oy].hi * is.w;
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const T lx = static_cast<T>(tx[ox].frac);
          const T top = (T(1) - lx) * r0[tx[ox].lo] + lx * r0[tx[ox].hi];
          const T bot = (T(1) - lx) * r1[tx[ox].lo] + lx * r1[tx[ox].hi];
          o[oy * out_w + ox] = (T(1) - ly) * top + ly * bot;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> weighted_fusion(const Tensor4<T>& s, const Tensor4<T>& c, const FusionWeights<T>& w) {
  return axpy(w.theta, s, w.sigma, c);
}

template <typename T>
Tensor4<T> channel_affine(const Tensor4<T>& x, std::span<const T> scale, std::span<const T> shift) {
  const Shape4& s = x.shape();
  if (scale.size() != s.c || shift.size() != s.c) throw ShapeError("affine parameter length != channels");
  Tensor4<T> out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* in = x.plane(n, c);
      T* o = out.plane(n, c);
      const T a = scale[c], b = shift[c];
      for (std::size_t i = 0; i < s.plane(); ++i) o[i] = a * in[i] + b;
    }
  return out;
}

template <typename T>
Tensor4<T> add(const Tensor4<T>& x, const Tensor4<T>& y) {
  if (x.shape() != y.shape()) throw ShapeError("add shape mismatch " + x.shape().str() + " vs " + y.shape().str());
  Tensor4<T> out(x.shape());
  auto o = out.data();
  auto a = x.data();
  auto b = y.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  return out;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor4<T>& logits, const LabelMap& labels, std::int32_t ignore_index) {
  const Shape4& s = logits.shape();
  if (labels.n() != s.n || labels.h() != s.h || labels.w() != s.w) {
    throw ShapeError("label map shape does not match logits " + s.str());
  }
  std::size_t valid = 0;
  for (std::int32_t l : labels.data()) {
    if (l == ignore_index) continue;
    if (l < 0 || static_cast<std::size_t>(l) >= s.c) {
      throw LabelError("label " + std::to_string(l) + " outside [0," + std::to_string(s.c) + ")");
    }
    ++valid;
  }
  LossResult<T> r;
  r.grad = Tensor4<T>(s);
  r.valid_pixels = valid;
  if (valid == 0) return r;
  const double inv = 1.0 / static_cast<double>(valid);
  double total = 0.0, comp = 0.0;
  std::vector<double> prob(s.c);
  const std::size_t hw = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < hw; ++p) {
      const std::int32_t label = labels.data()[n * hw + p];
      if (label == ignore_index) continue;
      double mx = logits.plane(n, 0)[p];
      for (std::size_t c = 1; c < s.c; ++c) mx = std::max<double>(mx, logits.plane(n, c)[p]);
      double z = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) {
        prob[c] = std::exp(static_cast<double>(logits.plane(n, c)[p]) - mx);
        z += prob[c];
      }
      const double log_z = std::log(z);
      const double term = log_z - (static_cast<double>(logits.plane(n, static_cast<std::size_t>(label))[p]) - mx);
      // Neumaier summation
      const double t = total + term;
      comp += std::abs(total) >= std::abs(term) ? (total - t) + term : (term - t) + total;
      total = t;
      for (std::size_t c = 0; c < s.c; ++c) {
        double g = prob[c] / z;
        if (c == static_cast<std::size_t>(label)) g -= 1.0;
        r.grad.plane(n, c)[p] = static_cast<T>(g * inv);
      }
    }
  }
  r.loss = static_cast<T>((total + comp) * inv);
  return r;
}

template <typename T>
LabelMap argmax_labels(const Tensor4<T>& logits) {
  const Shape4& s = logits.shape();
  LabelMap out(s.n, s.h, s.w);
  const std::size_t hw = s.plane();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < hw; ++p) {
      std::size_t best = 0;
      T bv = logits.plane(n, 0)[p];
      for (std::size_t c = 1; c < s.c; ++c) {
        const T v = logits.plane(n, c)[p];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      out.data()[n * hw + p] = static_cast<std::int32_t>(best);
    }
  return out;
}

#define BCPNET_INSTANTIATE(T)                                                                            \
  template Tensor4<T> conv2d<T>(const Tensor4<T>&, const Tensor4<T>&, std::span<const T>,               \
                                const ConvGeometry&);                                                    \
  template Tensor4<T> separable_conv<T>(const Tensor4<T>&, const ConvParams<T>&, const ConvParams<T>&); \
  template Tensor4<T> pool2d<T>(const Tensor4<T>&, const PoolParams&);                                   \
  template Tensor4<T> bilinear_resize<T>(const Tensor4<T>&, std::size_t, std::size_t);                   \
  template Tensor4<T> weighted_fusion<T>(const Tensor4<T>&, const Tensor4<T>&, const FusionWeights<T>&); \
  template Tensor4<T> channel_affine<T>(const Tensor4<T>&, std::span<const T>, std::span<const T>);      \
  template Tensor4<T> add<T>(const Tensor4<T>&, const Tensor4<T>&);                                      \
  template LossResult<T> softmax_cross_entropy<T>(const Tensor4<T>&, const LabelMap&, std::int32_t);     \
  template LabelMap argmax_labels<T>(const Tensor4<T>&);

BCPNET_INSTANTIATE(float)
BCPNET_INSTANTIATE(double)
#undef BCPNET_INSTANTIATE

}  // namespace bcpnet
