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
#include "bcpnet/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nnops_internal.hpp"

namespace bcpnet {

using internal::valid_range;
using internal::WindowRange;

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const Tensor4<T>& weight, bool has_bias, const ConvGeometry& g,
                             const Tensor4<T>& dy, bool need_dx) {
  const Shape4 os = conv_out_shape(x.shape(), weight.shape(), 0, g);
  if (dy.shape() != os) throw ShapeError("conv2d_backward: upstream " + dy.shape().str() + " != " + os.str());
  const Shape4& is = x.shape();
  const std::size_t k = weight.shape().h;
  const std::size_t cin_g = weight.shape().c;
  const std::size_t cout_g = os.c / g.groups;

  ConvGrads<T> r;
  r.dweight = Tensor4<T>(weight.shape());
  if (need_dx) r.dx = Tensor4<T>(is);
  if (has_bias) {
    r.dbias.assign(os.c, T(0));
    for (std::size_t oc = 0; oc < os.c; ++oc) {
      double acc = 0.0;
      for (std::size_t n = 0; n < os.n; ++n) {
        const T* d = dy.plane(n, oc);
        for (std::size_t p = 0; p < os.plane(); ++p) acc += d[p];
      }
      r.dbias[oc] = static_cast<T>(acc);
    }
  }

  for (std::size_t oc = 0; oc < os.c; ++oc) {
    const std::size_t grp = oc / cout_g;
    for (std::size_t icg = 0; icg < cin_g; ++icg) {
      const std::size_t ic = grp * cin_g + icg;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const WindowRange ry = valid_range(os.h, is.h, ky, g.stride, g.padding);
        for (std::size_t kx = 0; kx < k; ++kx) {
          const WindowRange rx = valid_range(os.w, is.w, kx, g.stride, g.padding);
          const T wv = weight.at(oc, icg, ky, kx);
          double acc = 0.0;
          for (std::size_t n = 0; n < is.n; ++n) {
            const T* in = x.plane(n, ic);
            const T* d = dy.plane(n, oc);
            T* dxp = need_dx ? r.dx.plane(n, ic) : nullptr;
            for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride) + ry.shift;
              const std::ptrdiff_t row = iy * static_cast<std::ptrdiff_t>(is.w);
              const T* drow = d + oy * os.w;
              for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) {
                const std::ptrdiff_t idx = row + static_cast<std::ptrdiff_t>(ox * g.stride) + rx.shift;
                acc += static_cast<double>(drow[ox]) * static_cast<double>(in[idx]);
                if (dxp) dxp[idx] += wv * drow[ox];
              }
            }
          }
          r.dweight.at(oc, icg, ky, kx) = static_cast<T>(acc);
        }
      }
    }
  }
  return r;
}

template <typename T>
SeparableGrads<T> separable_conv_backward(const Tensor4<T>& x, const ConvParams<T>& dw, const ConvParams<T>& pw,
                                          const Tensor4<T>& dy) {
  const Tensor4<T> mid = conv2d(x, dw);
  ConvGrads<T> gp = conv2d_backward(mid, pw.weight, !pw.bias.empty(), pw.geometry, dy, true);
  ConvGrads<T> gd = conv2d_backward(x, dw.weight, false, dw.geometry, gp.dx, true);
  return {std::move(gd.dx), std::move(gd.dweight), std::move(gp.dweight), std::move(gp.dbias)};
}

template <typename T>
Tensor4<T> pool2d_backward(const Tensor4<T>& x, const PoolParams& p, const Tensor4<T>& dy) {
  const Shape4 os = pool_out_shape(x.shape(), p);
  if (dy.shape() != os) throw ShapeError("pool2d_backward: upstream shape mismatch");
  const Shape4& is = x.shape();
  Tensor4<T> dx(is);
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      const T* in = x.plane(n, c);
      const T* d = dy.plane(n, c);
      T* o = dx.plane(n, c);
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        const auto ry = internal::window_at(oy, is.h, p.k, p.stride, p.padding);
        for (std::size_t ox = 0; ox < os.w; ++ox) {
          const auto rx = internal::window_at(ox, is.w, p.k, p.stride, p.padding);
          const T g = d[oy * os.w + ox];
          if (p.kind == PoolKind::kMax) {
            std::size_t best = ry.begin * is.w + rx.begin;
            for (std::size_t y = ry.begin; y < ry.end; ++y)
              for (std::size_t xx = rx.begin; xx < rx.end; ++xx)
                if (in[y * is.w + xx] > in[best]) best = y * is.w + xx;
            o[best] += g;
          } else {
            const T share = g / static_cast<T>((ry.end - ry.begin) * (rx.end - rx.begin));
            for (std::size_t y = ry.begin; y < ry.end; ++y)
              for (std::size_t xx = rx.begin; xx < rx.end; ++xx) o[y * is.w + xx] += share;
          }
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor4<T> bilinear_resize_backward(const Tensor4<T>& dy, std::size_t in_h, std::size_t in_w) {
  const Shape4& os = dy.shape();
  Tensor4<T> dx(Shape4{os.n, os.c, in_h, in_w});
  const auto ty = resize_taps(in_h, os.h);
  const auto tx = resize_taps(in_w, os.w);
  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t c = 0; c < os.c; ++c) {
      const T* d = dy.plane(n, c);
      T* o = dx.plane(n, c);
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        const T ly = static_cast<T>(ty[oy].frac);
        T* r0 = o + ty[oy].lo * in_w;
        T* r1 = o + ty[oy].hi * in_w;
        for (std::size_t ox = 0; ox < os.w; ++ox) {
          const T lx = static_cast<T>(tx[ox].frac);
          const T g = d[oy * os.w + ox];
          const T top = (T(1) - ly) * g;
          const T bot = ly * g;
          r0[tx[ox].lo] += (T(1) - lx) * top;
          r0[tx[ox].hi] += lx * top;
          r1[tx[ox].lo] += (T(1) - lx) * bot;
          r1[tx[ox].hi] += lx * bot;
        }
      }
    }
  }
  return dx;
}

template <typename T>
FusionGrads<T> weighted_fusion_backward(const Tensor4<T>& s, const Tensor4<T>& c, const FusionWeights<T>& w,
                                        const Tensor4<T>& dy) {
  if (s.shape() != c.shape() || s.shape() != dy.shape()) throw ShapeError("weighted_fusion_backward: shape mismatch");
  FusionGrads<T> r;
  r.ds = Tensor4<T>(s.shape());
  r.dc = Tensor4<T>(s.shape());
  double dt = 0.0, ds = 0.0;
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const T g = dy[i];
    dt += static_cast<double>(s[i]) * g;
    ds += static_cast<double>(c[i]) * g;
    r.ds[i] = w.theta * g;
    r.dc[i] = w.sigma * g;
  }
  r.dtheta = static_cast<T>(dt);
  r.dsigma = static_cast<T>(ds);
  return r;
}

template <typename T>
AffineGrads<T> channel_affine_backward(const Tensor4<T>& x, std::span<const T> scale, const Tensor4<T>& dy) {
  const Shape4& s = x.shape();
  if (dy.shape() != s || scale.size() != s.c) throw ShapeError("channel_affine_backward: shape mismatch");
  AffineGrads<T> r;
  r.dx = Tensor4<T>(s);
  r.dscale.assign(s.c, T(0));
  r.dshift.assign(s.c, T(0));
  for (std::size_t c = 0; c < s.c; ++c) {
    double a = 0.0, b = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* in = x.plane(n, c);
      const T* d = dy.plane(n, c);
      T* o = r.dx.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        a += static_cast<double>(in[i]) * d[i];
        b += d[i];
        o[i] = scale[c] * d[i];
      }
    }
    r.dscale[c] = static_cast<T>(a);
    r.dshift[c] = static_cast<T>(b);
  }
  return r;
}

template <typename T>
Tensor4<T> unary_backward(const Tensor4<T>& x, Unary kind, const Tensor4<T>& dy) {
  if (x.shape() != dy.shape()) throw ShapeError("unary_backward: shape mismatch");
  Tensor4<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    bool pass = true;
    if (kind == Unary::kRelu) pass = v > T(0);
    if (kind == Unary::kRelu6) pass = v > T(0) && v < T(6);
    dx[i] = pass ? dy[i] : T(0);
  }
  return dx;
}

namespace {

template <typename T>
void accumulate(Tensor4<T>& dst, const Tensor4<T>& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename T>
void accumulate(Tensor4<T>& dst, Tensor4<T>&& src) {
  if (dst.empty()) {
    dst = std::move(src);
    return;
  }
  accumulate(dst, static_cast<const Tensor4<T>&>(src));
}

template <typename T>
void accumulate(Tensor4<T>& dst, const std::vector<T>& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename T>
GradStore<T> backward(const ModelGraph& g, const WeightStore<T>& weights, const ForwardState<T>& state,
                      const Tensor4<T>& upstream) {
  if (state.graph != &g) throw StateError("forward state belongs to a different graph");
  if (state.mode != ForwardMode::kRetain) throw StateError("backward needs a retained forward pass");
  if (state.activations.size() != g.layers.size()) throw StateError("forward state is incomplete");
  const Tensor4<T>& logits = state.logits();
  if (upstream.shape() != logits.shape()) {
    throw ShapeError("upstream " + upstream.shape().str() + " != logits " + logits.shape().str());
  }

  GradStore<T> grads;
  for (const auto& slot : param_slots(g)) grads.params.emplace(slot.name, Tensor4<T>(slot.shape));
  grads.input = Tensor4<T>(state.input.shape());

  std::vector<Tensor4<T>> dacts(g.layers.size());
  dacts[g.index_of(g.output)] = upstream;

  auto route = [&](const std::string& id, Tensor4<T>&& grad) {
    if (id == kInputId) {
      accumulate(grads.input, grad);
    } else {
      accumulate(dacts[g.index_of(id)], std::move(grad));
    }
  };
  auto param = [&](const std::string& name) -> Tensor4<T>& { return grads.params.at(name); };

  for (std::size_t i = g.layers.size(); i-- > 0;) {
    if (dacts[i].empty()) continue;
    const LayerSpec& l = g.layers[i];
    const Tensor4<T> dy = std::move(dacts[i]);
    dacts[i] = Tensor4<T>();
    const Tensor4<T>& x = state.activation(l.inputs.at(0));
    switch (l.kind) {
      case LayerKind::kConv: {
        const auto& c = std::get<ConvSpec>(l.params);
        const auto& wt = weight_at(weights, l.id + ".weight", {c.c_out, c.c_in / c.groups, c.k, c.k});
        auto r = conv2d_backward(x, wt, c.bias, {c.stride, c.padding, c.groups}, dy, true);
        accumulate(param(l.id + ".weight"), r.dweight);
        if (c.bias) accumulate(param(l.id + ".bias"), r.dbias);
        route(l.inputs[0], std::move(r.dx));
        break;
      }
      case LayerKind::kSeparable: {
        const auto& s = std::get<SeparableSpec>(l.params);
        ConvParams<T> dw{weight_at(weights, l.id + ".dw.weight", {s.c_in, 1, s.k, s.k}), {}, {1, s.k / 2, s.c_in}};
        ConvParams<T> pw{weight_at(weights, l.id + ".pw.weight", {s.c_out, s.c_in, 1, 1}), {}, {}};
        if (s.pw_bias) {
          const auto b = weight_at(weights, l.id + ".pw.bias", {1, s.c_out, 1, 1}).data();
          pw.bias.assign(b.begin(), b.end());
        }
        auto r = separable_conv_backward(x, dw, pw, dy);
        accumulate(param(l.id + ".dw.weight"), r.ddw);
        accumulate(param(l.id + ".pw.weight"), r.dpw);
        if (s.pw_bias) accumulate(param(l.id + ".pw.bias"), r.dpw_bias);
        route(l.inputs[0], std::move(r.dx));
        break;
      }
      case LayerKind::kPool:
        route(l.inputs[0], pool2d_backward(x, std::get<PoolSpec>(l.params).params, dy));
        break;
      case LayerKind::kResize:
        route(l.inputs[0], bilinear_resize_backward(dy, x.shape().h, x.shape().w));
        break;
      case LayerKind::kFusion: {
        const Tensor4<T>& c = state.activation(l.inputs.at(1));
        FusionWeights<T> fw{weight_at(weights, l.id + ".theta", {1, 1, 1, 1})[0],
                            weight_at(weights, l.id + ".sigma", {1, 1, 1, 1})[0]};
        auto r = weighted_fusion_backward(x, c, fw, dy);
        param(l.id + ".theta")[0] += r.dtheta;
        param(l.id + ".sigma")[0] += r.dsigma;
        route(l.inputs[0], std::move(r.ds));
        route(l.inputs[1], std::move(r.dc));
        break;
      }
      case LayerKind::kAffine: {
        const std::size_t ch = std::get<AffineSpec>(l.params).channels;
        auto r = channel_affine_backward<T>(x, weight_at(weights, l.id + ".scale", {1, ch, 1, 1}).data(), dy);
        accumulate(param(l.id + ".scale"), r.dscale);
        accumulate(param(l.id + ".shift"), r.dshift);
        route(l.inputs[0], std::move(r.dx));
        break;
      }
      case LayerKind::kActivation:
        route(l.inputs[0], unary_backward(x, std::get<ActivationSpec>(l.params).kind, dy));
        break;
      case LayerKind::kAdd: {
        Tensor4<T> copy = dy;
        route(l.inputs[0], std::move(copy));
        Tensor4<T> copy2 = dy;
        route(l.inputs[1], std::move(copy2));
        break;
      }
    }
  }
  return grads;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

FiniteDiffResult finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                   std::span<const double> w, std::span<const double> analytic, double eps,
                                   std::size_t max_coords, std::uint64_t seed) {
  if (!(eps > 0.0)) throw NumericError("finite difference step must be positive");
  if (analytic.size() != w.size()) throw ShapeError("analytic gradient length != parameter length");
  FiniteDiffResult r;
  r.coords.resize(w.size());
  std::iota(r.coords.begin(), r.coords.end(), std::size_t{0});
  if (max_coords > 0 && max_coords < w.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(r.coords.begin(), r.coords.end(), rng);
    r.coords.resize(max_coords);
  }
  std::vector<double> probe(w.begin(), w.end());
  for (std::size_t i : r.coords) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = f(probe);
    probe[i] = orig - eps;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("non-finite objective while probing coordinate " + std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = relative_error(analytic[i], numeric);
    if (err > r.max_rel_error || i == r.coords.front()) {
      r.max_rel_error = err;
      r.worst_index = i;
    }
  }
  return r;
}

namespace {

// Piecewise region of every activation and the argmax of every max-pool
// window. Two weight points with equal patterns lie on the same smooth piece.
std::vector<std::uint32_t> kink_pattern(const ModelGraph& g, const ForwardState<double>& st) {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    if (l.kind == LayerKind::kActivation) {
      const Unary kind = std::get<ActivationSpec>(l.params).kind;
      if (kind == Unary::kCopy) continue;
      for (double v : st.activations[i].data()) out.push_back(v <= 0.0 ? 0u : (kind == Unary::kRelu6 && v >= 6.0) ? 2u : 1u);
    } else if (l.kind == LayerKind::kPool) {
      const PoolParams& p = std::get<PoolSpec>(l.params).params;
      if (p.kind != PoolKind::kMax) continue;
      const Tensor4<double>& x = st.activation(l.inputs[0]);
      const Shape4& is = x.shape();
      const Shape4 os = pool_out_shape(is, p);
      for (std::size_t n = 0; n < is.n; ++n) {
        for (std::size_t c = 0; c < is.c; ++c) {
          const double* in = x.plane(n, c);
          for (std::size_t oy = 0; oy < os.h; ++oy) {
            const auto ry = internal::window_at(oy, is.h, p.k, p.stride, p.padding);
            for (std::size_t ox = 0; ox < os.w; ++ox) {
              const auto rx = internal::window_at(ox, is.w, p.k, p.stride, p.padding);
              std::size_t best = ry.begin * is.w + rx.begin;
              for (std::size_t y = ry.begin; y < ry.end; ++y)
                for (std::size_t xx = rx.begin; xx < rx.end; ++xx)
                  if (in[y * is.w + xx] > in[best]) best = y * is.w + xx;
              out.push_back(static_cast<std::uint32_t>(best));
            }
          }
        }
      }
    }
  }
  return out;
}

struct Probe {
  double loss = 0.0;
  bool same_piece = true;
};

// Checks up to `max_coords` coordinates of `target`, skipping those whose
// probes leave the smooth piece of the base point.
SlotCheck check_tensor(const std::string& name, Tensor4<double>& target, std::span<const double> analytic,
                       const std::function<Probe()>& probe, double eps, std::size_t max_coords,
                       std::uint64_t seed) {
  SlotCheck out{name, target.size(), 0, 0, 0.0};
  std::vector<std::size_t> order(target.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t want = max_coords == 0 ? order.size() : std::min(max_coords, order.size());
  for (std::size_t i : order) {
    if (out.checked == want) break;
    const double orig = target[i];
    target[i] = orig + eps;
    const Probe fp = probe();
    target[i] = orig - eps;
    const Probe fm = probe();
    target[i] = orig;
    if (!std::isfinite(fp.loss) || !std::isfinite(fm.loss)) {
      throw NumericError("non-finite loss while probing " + name + "[" + std::to_string(i) + "]");
    }
    if (!fp.same_piece || !fm.same_piece) {
      ++out.skipped;
      continue;
    }
    const double numeric = (fp.loss - fm.loss) / (2.0 * eps);
    out.max_rel_error = std::max(out.max_rel_error, relative_error(analytic[i], numeric));
    ++out.checked;
  }
  return out;
}

}  // namespace

WeightStore<double> gradcheck_weights(const ModelGraph& g, std::uint64_t seed, double offset_stddev) {
  WeightStore<double> w = init_weights<double>(g, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> nd(0.0, offset_stddev);
  for (const auto& slot : param_slots(g)) {
    if (slot.name.ends_with(".theta") || slot.name.ends_with(".sigma")) {
      w.at(slot.name).fill(1.0);
      continue;
    }
    const bool offset = slot.name.ends_with(".bias") || slot.name.ends_with(".shift");
    if (!offset) continue;
    for (double& v : w.at(slot.name).data()) v = nd(rng);
  }
  return w;
}

GraphGradCheck gradcheck_graph(const ModelGraph& g, const WeightStore<double>& weights, const Tensor4<double>& x,
                               const LabelMap& labels, double eps, std::size_t max_coords_per_slot,
                               std::uint64_t seed) {
  if (!(eps > 0.0)) throw NumericError("finite difference step must be positive");
  const auto st = forward(g, weights, x);
  const auto loss = softmax_cross_entropy(st.logits(), labels);
  const auto grads = backward(g, weights, st, loss.grad);
  const auto base = kink_pattern(g, st);

  WeightStore<double> probe_w = weights;
  Tensor4<double> probe_x = x;
  auto probe = [&]() {
    const auto s = forward(g, probe_w, probe_x);
    return Probe{static_cast<double>(softmax_cross_entropy(s.logits(), labels).loss), kink_pattern(g, s) == base};
  };

  GraphGradCheck out;
  std::uint64_t slot_seed = seed;
  for (const auto& slot : param_slots(g)) {
    out.slots.push_back(check_tensor(slot.name, probe_w.at(slot.name), grads.params.at(slot.name).data(), probe, eps,
                                     max_coords_per_slot, slot_seed++));
    out.max_rel_error = std::max(out.max_rel_error, out.slots.back().max_rel_error);
  }
  out.input = check_tensor(kInputId, probe_x, grads.input.data(), probe, eps, max_coords_per_slot, slot_seed);
  out.max_rel_error = std::max(out.max_rel_error, out.input.max_rel_error);
  return out;
}

#define BCPNET_INSTANTIATE(T)                                                                                    \
  template ConvGrads<T> conv2d_backward<T>(const Tensor4<T>&, const Tensor4<T>&, bool, const ConvGeometry&,      \
                                           const Tensor4<T>&, bool);                                             \
  template SeparableGrads<T> separable_conv_backward<T>(const Tensor4<T>&, const ConvParams<T>&,                 \
                                                        const ConvParams<T>&, const Tensor4<T>&);                \
  template Tensor4<T> pool2d_backward<T>(const Tensor4<T>&, const PoolParams&, const Tensor4<T>&);               \
  template Tensor4<T> bilinear_resize_backward<T>(const Tensor4<T>&, std::size_t, std::size_t);                  \
  template FusionGrads<T> weighted_fusion_backward<T>(const Tensor4<T>&, const Tensor4<T>&,                      \
                                                      const FusionWeights<T>&, const Tensor4<T>&);               \
  template AffineGrads<T> channel_affine_backward<T>(const Tensor4<T>&, std::span<const T>, const Tensor4<T>&);  \
  template Tensor4<T> unary_backward<T>(const Tensor4<T>&, Unary, const Tensor4<T>&);                            \
  template GradStore<T> backward<T>(const ModelGraph&, const WeightStore<T>&, const ForwardState<T>&,            \
                                    const Tensor4<T>&);

BCPNET_INSTANTIATE(float)
BCPNET_INSTANTIATE(double)
#undef BCPNET_INSTANTIATE

}  // namespace bcpnet
