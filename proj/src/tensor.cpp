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
#include "bcpnet/tensor.hpp"

#include <cmath>
#include <limits>

namespace bcpnet {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

void validate_shape(const Shape4& s) {
  if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0) {
    throw InvalidShapeError("tensor shape " + s.str() + " has a zero dimension");
  }
  // Cap at what a std::vector of doubles can address.
  const std::size_t limit = std::numeric_limits<std::size_t>::max() / sizeof(double);
  std::size_t total = 1;
  for (std::size_t d : {s.n, s.c, s.h, s.w}) {
    if (total > limit / d) throw InvalidShapeError("tensor shape " + s.str() + " overflows");
    total *= d;
  }
}

const char* unary_name(Unary kind) {
  switch (kind) {
    case Unary::kRelu:
      return "relu";
    case Unary::kRelu6:
      return "relu6";
    case Unary::kCopy:
      return "copy";
  }
  return "?";
}

template <typename T>
Tensor4<T> axpy(T alpha, const Tensor4<T>& x, T beta, const Tensor4<T>& y) {
  if (x.shape() != y.shape()) {
    throw ShapeError("axpy shape mismatch " + x.shape().str() + " vs " + y.shape().str());
  }
  Tensor4<T> out(x.shape());
  auto o = out.data();
  auto a = x.data();
  auto b = y.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = alpha * a[i] + beta * b[i];
  return out;
}

template <typename T>
Tensor4<T> map_unary(const Tensor4<T>& x, Unary kind) {
  if (kind == Unary::kCopy) return x;
  Tensor4<T> out(x.shape());
  auto o = out.data();
  auto a = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = unary_apply(kind, a[i]);
  return out;
}

template <typename T>
bool all_finite(const Tensor4<T>& x) {
  for (T v : x.data())
    if (!std::isfinite(v)) return false;
  return true;
}

#define BCPNET_INSTANTIATE(T)                                                     \
  template Tensor4<T> axpy<T>(T, const Tensor4<T>&, T, const Tensor4<T>&);        \
  template Tensor4<T> map_unary<T>(const Tensor4<T>&, Unary);                     \
  template bool all_finite<T>(const Tensor4<T>&);

BCPNET_INSTANTIATE(float)
BCPNET_INSTANTIATE(double)
#undef BCPNET_INSTANTIATE

}  // namespace bcpnet
