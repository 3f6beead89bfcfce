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
#include <limits>
#include <random>

#include "bcpnet/tensor.hpp"
#include "doctest.h"

using namespace bcpnet;

TEST_CASE("create with constant fill") {
  Tensor4<float> z(Shape4{1, 1, 2, 2}, 0.0f);
  for (float v : z.data()) CHECK(v == 0.0f);

  Tensor4<double> ones(Shape4{2, 3, 4, 5}, 1.0);
  double sum = 0.0;
  for (double v : ones.data()) sum += v;
  CHECK(sum == 120.0);
  CHECK(ones.size() == 120);

  Tensor4<float> one(Shape4{1, 1, 1, 1}, 7.5f);
  CHECK(one.size() == 1);
  CHECK(one[0] == 7.5f);
}

TEST_CASE("invalid shapes are rejected") {
  CHECK_THROWS_AS(Tensor4<float>(Shape4{0, 1, 1, 1}), InvalidShapeError);
  CHECK_THROWS_AS(Tensor4<float>(Shape4{1, 1, 0, 3}), InvalidShapeError);
  const std::size_t huge = std::numeric_limits<std::size_t>::max() / 2;
  CHECK_THROWS_AS(Tensor4<float>(Shape4{huge, huge, 1, 1}), InvalidShapeError);
  CHECK_THROWS_AS(Tensor4<float>(Shape4{1, 1, 2, 2}, std::vector<float>(3)), ShapeError);
}

TEST_CASE("generator order round-trips row-major NCHW") {
  const Shape4 s{2, 3, 4, 5};
  auto t = Tensor4<double>::generate(s, [](auto n, auto c, auto h, auto w) { return ((n * 3 + c) * 4 + h) * 5 + w; });
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == static_cast<double>(i));
  CHECK(t.at(1, 2, 3, 4) == 119.0);
  CHECK(t.plane(1, 0)[0] == 60.0);
}

TEST_CASE("axpy") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  auto x = Tensor4<double>::generate({2, 2, 3, 3}, [&](auto...) { return nd(rng); });
  auto y = Tensor4<double>::generate({2, 2, 3, 3}, [&](auto...) { return nd(rng); });

  CHECK(axpy(1.0, x, 0.0, y) == x);
  const auto r = axpy(0.5, Tensor4<double>({1, 1, 1, 2}, {1, 2}), 2.0, Tensor4<double>({1, 1, 1, 2}, {3, 4}));
  CHECK(r[0] == 6.5);
  CHECK(r[1] == 9.0);
  const auto zero = axpy(-1.0, x, 1.0, x);
  for (double v : zero.data()) CHECK(v == 0.0);
  CHECK(axpy(1.0, x, 1.0, Tensor4<double>(x.shape())) == x);

  CHECK_THROWS_AS(axpy(1.0, x, 1.0, Tensor4<double>({2, 2, 3, 4})), ShapeError);
}

TEST_CASE("map_unary") {
  Tensor4<float> a({1, 1, 1, 3}, {-1.0f, 0.0f, 2.0f});
  const auto r = map_unary(a, Unary::kRelu);
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 0.0f);
  CHECK(r[2] == 2.0f);

  Tensor4<float> b({1, 1, 1, 2}, {7.0f, 3.0f});
  const auto r6 = map_unary(b, Unary::kRelu6);
  CHECK(r6[0] == 6.0f);
  CHECK(r6[1] == 3.0f);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-10, 10);
  auto x = Tensor4<float>::generate({2, 3, 5, 7}, [&](auto...) { return u(rng); });
  CHECK(map_unary(x, Unary::kCopy) == x);
  for (Unary k : {Unary::kRelu, Unary::kRelu6, Unary::kCopy}) CHECK(map_unary(x, k).shape() == x.shape());
}

TEST_CASE("finite check and cast") {
  Tensor4<double> t({1, 1, 1, 2}, {1.0, 2.0});
  CHECK(all_finite(t));
  t[1] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(all_finite(t));

  Tensor4<double> d({1, 2, 1, 1}, {0.25, -3.5});
  const auto f = d.cast<float>();
  CHECK(f.shape() == d.shape());
  CHECK(f[0] == 0.25f);
  CHECK(f[1] == -3.5f);
}
