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
#include <algorithm>
#include <cmath>
#include <random>

#include "bcpnet/nnops.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace bcpnet;

namespace {

Tensor4<double> ramp4x4() {
  return Tensor4<double>::generate({1, 1, 4, 4}, [](auto, auto, auto h, auto w) { return h * 4 + w; });
}

Tensor4<double> delta3x3(std::size_t channels) {
  Tensor4<double> k({channels, 1, 3, 3});
  for (std::size_t c = 0; c < channels; ++c) k.at(c, 0, 1, 1) = 1.0;
  return k;
}

Tensor4<double> identity1x1(std::size_t channels) {
  Tensor4<double> k({channels, channels, 1, 1});
  for (std::size_t c = 0; c < channels; ++c) k.at(c, c, 0, 0) = 1.0;
  return k;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& e : v) e = u(rng);
  return v;
}

struct Rng {
  std::mt19937_64 gen;
  std::size_t operator()(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
  }
};

}  // namespace

TEST_CASE("conv2d examples") {
  Tensor4<double> x({1, 1, 1, 1}, 3.0);
  Tensor4<double> w({1, 1, 1, 1}, 2.5);
  CHECK(conv2d<double>(x, w, {}, {})[0] == 7.5);

  std::mt19937_64 rng(1);
  const auto img = oracle::random({1, 4, 6, 7}, rng);
  CHECK(conv2d<double>(img, delta3x3(4), {}, {1, 1, 4}) == img);

  Tensor4<double> ones({1, 1, 3, 3}, 1.0);
  CHECK(conv2d<double>(ramp4x4(), ones, {}, {1, 1, 1}).at(0, 0, 0, 0) == 10.0);

  CHECK(conv_out_shape({2, 3, 17, 23}, {8, 3, 3, 3}, 0, {2, 1, 1}) == Shape4{2, 8, 9, 12});
}

TEST_CASE("conv2d errors") {
  Tensor4<double> x({1, 3, 5, 5});
  CHECK_THROWS_AS(conv2d<double>(x, Tensor4<double>({4, 2, 3, 3}), {}, {1, 1, 1}), ShapeError);
  CHECK_THROWS_AS(conv2d<double>(x, Tensor4<double>({4, 1, 3, 3}), {}, {1, 1, 2}), ShapeError);
  CHECK_THROWS_AS(conv2d<double>(x, Tensor4<double>({2, 3, 7, 7}), {}, {1, 0, 1}), GeometryError);
  std::vector<double> bad_bias(3, 0.0);
  CHECK_THROWS_AS(conv2d<double>(x, Tensor4<double>({2, 3, 1, 1}), bad_bias, {}), ShapeError);
}

TEST_CASE("conv2d equals the naive oracle bit for bit") {
  Rng pick{std::mt19937_64(11)};
  int run = 0;
  while (run < 150) {
    const std::size_t n = pick(1, 2), c = pick(1, 4), h = pick(1, 9), w = pick(1, 9);
    const std::size_t k = 1 + 2 * pick(0, 2);
    const std::size_t stride = pick(1, 2), pad = pick(0, k / 2);
    if (h + 2 * pad < k || w + 2 * pad < k) continue;
    const bool depthwise = pick(0, 1) == 1;
    const std::size_t groups = depthwise ? c : 1;
    const std::size_t cout = depthwise ? c : pick(1, 5);
    const auto x = oracle::random({n, c, h, w}, pick.gen);
    const auto wt = oracle::random({cout, c / groups, k, k}, pick.gen);
    const auto bias = pick(0, 1) ? random_vec(cout, pick.gen) : std::vector<double>{};
    const auto got = conv2d<double>(x, wt, bias, {stride, pad, groups});
    const auto want = oracle::conv(x, wt, bias, long(stride), long(pad), long(groups));
    REQUIRE(got.shape() == want.out.shape());
    CHECK(got == want.out);
    ++run;
  }
}

TEST_CASE("conv2d is linear without bias") {
  std::mt19937_64 rng(12);
  const auto x = oracle::random({2, 4, 9, 9}, rng);
  const auto y = oracle::random({2, 4, 9, 9}, rng);
  const auto w = oracle::random({3, 4, 3, 3}, rng);
  const double a = 0.7, b = -1.3;
  const ConvGeometry g{2, 1, 1};
  const auto lhs = conv2d<double>(axpy(a, x, b, y), w, {}, g);
  const auto rhs = axpy(a, conv2d<double>(x, w, {}, g), b, conv2d<double>(y, w, {}, g));
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    CHECK(std::abs(lhs[i] - rhs[i]) <= 1e-12 * std::max(1.0, std::abs(rhs[i])));
  }
}

TEST_CASE("float conv2d tracks double") {
  std::mt19937_64 rng(13);
  const auto x = oracle::random({1, 8, 12, 12}, rng);
  const auto w = oracle::random({16, 8, 1, 1}, rng);
  const auto b = random_vec(16, rng);
  std::vector<float> bf(b.begin(), b.end());
  const auto d = conv2d<double>(x, w, b, {});
  const auto f = conv2d<float>(x.cast<float>(), w.cast<float>(), bf, {});
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(d[i] - f[i]) < 1e-5);
}

TEST_CASE("separable conv") {
  std::mt19937_64 rng(21);
  const auto x = oracle::random({2, 5, 7, 6}, rng);
  ConvParams<double> dw{delta3x3(5), {}, {1, 1, 5}};
  ConvParams<double> pw{identity1x1(5), {}, {}};
  CHECK(separable_conv(x, dw, pw) == x);

  ConvParams<double> dw2{oracle::random({5, 1, 3, 3}, rng), {}, {1, 1, 5}};
  ConvParams<double> pw2{oracle::random({4, 5, 1, 1}, rng), random_vec(4, rng), {}};
  const auto mid = oracle::conv(x, dw2.weight, {}, 1, 1, 5).out;
  const auto want = oracle::conv(mid, pw2.weight, pw2.bias, 1, 0, 1).out;
  CHECK(separable_conv(x, dw2, pw2) == want);

  CHECK_THROWS_AS(separable_conv(x, ConvParams<double>{delta3x3(4), {}, {1, 1, 4}}, pw), ShapeError);
}

TEST_CASE("pool2d examples") {
  const auto r = pool2d(ramp4x4(), PoolParams{PoolKind::kMax, 3, 2, 1});
  REQUIRE(r.shape() == Shape4{1, 1, 2, 2});
  CHECK(r[0] == 5.0);
  CHECK(r[1] == 7.0);
  CHECK(r[2] == 13.0);
  CHECK(r[3] == 15.0);

  Tensor4<double> k({2, 3, 9, 11}, 2.25);
  for (PoolKind kind : {PoolKind::kMax, PoolKind::kAvg}) {
    const auto p3 = pool2d(k, PoolParams{kind, 3, 2, 1});
    const auto p5 = pool2d(k, PoolParams{kind, 5, 2, 2});
    for (double v : p3.data()) CHECK(v == 2.25);
    for (double v : p5.data()) CHECK(v == 2.25);
  }
  CHECK(window_out_size(17, 3, 2, 1) == 9);
  CHECK_THROWS_AS(pool_out_shape({1, 1, 1, 1}, PoolParams{PoolKind::kMax, 5, 1, 1}), GeometryError);
}

TEST_CASE("pool2d equals the naive oracle bit for bit") {
  Rng pick{std::mt19937_64(31)};
  int run = 0;
  while (run < 150) {
    const std::size_t k = pick(0, 1) ? 3 : 5;
    const std::size_t stride = pick(1, 2), pad = pick(0, k / 2);
    const std::size_t h = pick(1, 9), w = pick(1, 9);
    if (h + 2 * pad < k || w + 2 * pad < k) continue;
    const bool is_max = pick(0, 1) == 1;
    const auto x = oracle::random({pick(1, 2), pick(1, 3), h, w}, pick.gen);
    const auto got = pool2d(x, PoolParams{is_max ? PoolKind::kMax : PoolKind::kAvg, k, stride, pad});
    const auto want = oracle::pool(x, is_max, long(k), long(stride), long(pad));
    REQUIRE(got.shape() == want.shape());
    CHECK(got == want);
    if (is_max) {
      const double gmax = *std::max_element(x.data().begin(), x.data().end());
      for (double v : got.data()) CHECK(v <= gmax);
    }
    ++run;
  }
}

TEST_CASE("bilinear resize examples") {
  Tensor4<double> row({1, 1, 1, 2}, {0.0, 1.0});
  const auto r = bilinear_resize(row, 1, 4);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.25);
  CHECK(r[2] == 0.75);
  CHECK(r[3] == 1.0);

  Tensor4<double> k({1, 2, 3, 5}, -4.5);
  const auto up = bilinear_resize(k, 13, 2);
  for (double v : up.data()) CHECK(v == -4.5);

  std::mt19937_64 rng(41);
  const auto x = oracle::random({2, 3, 5, 6}, rng);
  CHECK(bilinear_resize(x, 5, 6) == x);
}

TEST_CASE("bilinear resize equals the naive oracle and keeps bounds") {
  Rng pick{std::mt19937_64(42)};
  for (int run = 0; run < 150; ++run) {
    const auto x = oracle::random({pick(1, 2), pick(1, 3), pick(1, 9), pick(1, 9)}, pick.gen);
    const std::size_t oh = pick(1, 20), ow = pick(1, 20);
    const auto got = bilinear_resize(x, oh, ow);
    CHECK(got == oracle::resize(x, long(oh), long(ow)));
    const auto [lo, hi] = std::minmax_element(x.data().begin(), x.data().end());
    for (double v : got.data()) {
      CHECK(v >= *lo);
      CHECK(v <= *hi);
    }
  }
}

TEST_CASE("weighted fusion") {
  std::mt19937_64 rng(51);
  const auto s = oracle::random({1, 3, 4, 4}, rng);
  const auto c = oracle::random({1, 3, 4, 4}, rng);
  CHECK(weighted_fusion(s, c, FusionWeights<double>{1.0, 0.0}) == s);
  CHECK(weighted_fusion(s, c, FusionWeights<double>{0.0, 1.0}) == c);
  const auto r = weighted_fusion(Tensor4<double>({1, 1, 1, 2}, {1, 2}), Tensor4<double>({1, 1, 1, 2}, {3, 4}),
                                 FusionWeights<double>{0.5, 2.0});
  CHECK(r[0] == 6.5);
  CHECK(r[1] == 9.0);
  CHECK_THROWS_AS(weighted_fusion(s, Tensor4<double>({1, 3, 4, 5}), FusionWeights<double>{}), ShapeError);
}

TEST_CASE("channel affine and add") {
  Tensor4<double> x({1, 2, 1, 2}, {1, 2, 3, 4});
  const std::vector<double> scale{2.0, -1.0}, shift{0.5, 1.0};
  const auto r = channel_affine<double>(x, scale, shift);
  CHECK(r[0] == 2.5);
  CHECK(r[1] == 4.5);
  CHECK(r[2] == -2.0);
  CHECK(r[3] == -3.0);
  const auto s = add(x, x);
  CHECK(s[3] == 8.0);
  CHECK_THROWS_AS(channel_affine<double>(x, std::vector<double>{1.0}, shift), ShapeError);
}

TEST_CASE("softmax cross entropy") {
  const std::size_t c = 5;
  Tensor4<double> uniform({2, c, 3, 3}, 0.7);
  LabelMap labels(2, 3, 3, 2);
  const auto u = softmax_cross_entropy(uniform, labels);
  CHECK(u.loss == doctest::Approx(std::log(double(c))).epsilon(1e-14));
  CHECK(u.valid_pixels == 18);

  double prev = 1e9;
  for (double margin : {0.0, 1.0, 4.0, 16.0, 64.0}) {
    Tensor4<double> t({1, 3, 1, 1});
    t[1] = margin;
    const double loss = softmax_cross_entropy(t, LabelMap(1, 1, 1, 1)).loss;
    CHECK(loss < prev);
    prev = loss;
  }
  CHECK(prev < 1e-20);

  std::mt19937_64 rng(61);
  const auto logits = oracle::random({2, 4, 3, 5}, rng, -3, 3);
  LabelMap lab(2, 3, 5);
  for (auto& v : lab.data()) v = std::int32_t(rng() % 5);
  for (auto& v : lab.data()) if (v == 4) v = kIgnoreIndex;
  const auto r = softmax_cross_entropy(logits, lab);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 5; ++x) {
        double sum = 0.0;
        for (std::size_t k = 0; k < 4; ++k) sum += r.grad.at(n, k, y, x);
        CHECK(std::abs(sum) < 1e-15);
        if (lab.at(n, y, x) == kIgnoreIndex) {
          for (std::size_t k = 0; k < 4; ++k) CHECK(r.grad.at(n, k, y, x) == 0.0);
        }
      }

  // Central differences on every logit.
  const double eps = 1e-5;
  double worst = 0.0;
  Tensor4<double> probe = logits;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = softmax_cross_entropy(probe, lab).loss;
    probe[i] = orig - eps;
    const double fm = softmax_cross_entropy(probe, lab).loss;
    probe[i] = orig;
    const double num = (fp - fm) / (2 * eps);
    worst = std::max(worst, std::abs(num - r.grad[i]) / std::max(1e-8, std::abs(num) + std::abs(r.grad[i])));
  }
  CHECK(worst < 1e-6);

  LabelMap all_ignored(1, 1, 1, kIgnoreIndex);
  const auto z = softmax_cross_entropy(Tensor4<double>({1, 2, 1, 1}, 1.0), all_ignored);
  CHECK(z.loss == 0.0);
  CHECK(z.valid_pixels == 0);

  CHECK_THROWS_AS(softmax_cross_entropy(Tensor4<double>({1, 2, 1, 1}), LabelMap(1, 1, 1, 2)), LabelError);
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor4<double>({1, 2, 1, 1}), LabelMap(1, 1, 1, -1)), LabelError);
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor4<double>({1, 2, 1, 1}), LabelMap(1, 2, 1, 0)), ShapeError);
}

TEST_CASE("argmax labels") {
  std::mt19937_64 rng(71);
  const auto one = oracle::random({2, 1, 3, 4}, rng);
  const auto am = argmax_labels(one);
  for (auto v : am.data()) CHECK(v == 0);

  Tensor4<double> tie({1, 3, 1, 1}, {0.2, 0.9, 0.9});
  CHECK(argmax_labels(tie).at(0, 0, 0) == 1);

  const auto x = oracle::random({1, 6, 5, 5}, rng);
  Tensor4<double> shifted = x;
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t xx = 0; xx < 5; ++xx) {
      const double off = double(y * 5 + xx) * 0.25 - 3.0;
      for (std::size_t c = 0; c < 6; ++c) shifted.at(0, c, y, xx) += off;
    }
  CHECK(argmax_labels(shifted) == argmax_labels(x));
}
