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
#ifndef BCPNET_TENSOR_HPP_
#define BCPNET_TENSOR_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "bcpnet/errors.hpp"

namespace bcpnet {

// Shape of a rank-4 NCHW tensor.
struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

// Throws InvalidShapeError if any dimension is zero or the element count
// overflows.
void validate_shape(const Shape4& shape);

enum class Unary { kRelu, kRelu6, kCopy };

const char* unary_name(Unary kind);

// Dense NCHW tensor. Storage is contiguous row-major; element (n, c, h, w)
// lives at ((n * C + c) * H + h) * W + w.
template <typename T>
class Tensor4 {
  static_assert(std::is_floating_point_v<T>);

 public:
  using value_type = T;

  Tensor4() = default;

  // Zero-filled tensor.
  explicit Tensor4(Shape4 shape) : shape_(shape) {
    validate_shape(shape_);
    data_.assign(shape_.numel(), T(0));
  }

  Tensor4(Shape4 shape, T fill) : shape_(shape) {
    validate_shape(shape_);
    data_.assign(shape_.numel(), fill);
  }

  Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  // gen(n, c, h, w) is called in row-major order.
  template <typename Gen>
  static Tensor4 generate(Shape4 shape, Gen&& gen) {
    Tensor4 t(shape);
    std::size_t i = 0;
    for (std::size_t n = 0; n < shape.n; ++n)
      for (std::size_t c = 0; c < shape.c; ++c)
        for (std::size_t h = 0; h < shape.h; ++h)
          for (std::size_t w = 0; w < shape.w; ++w) t.data_[i++] = static_cast<T>(gen(n, c, h, w));
    return t;
  }

  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) { return data_[offset(n, c, h, w)]; }
  T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const { return data_[offset(n, c, h, w)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
  const T* plane(std::size_t n, std::size_t c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  // Releases storage; the tensor becomes empty.
  void release() {
    std::vector<T>().swap(data_);
    shape_ = Shape4{};
  }

  template <typename U>
  Tensor4<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor4<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor4&) const = default;

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

// out[i] = alpha * x[i] + beta * y[i].
template <typename T>
Tensor4<T> axpy(T alpha, const Tensor4<T>& x, T beta, const Tensor4<T>& y);

template <typename T>
Tensor4<T> map_unary(const Tensor4<T>& x, Unary kind);

template <typename T>
T unary_apply(Unary kind, T v) {
  switch (kind) {
    case Unary::kRelu:
      return v > T(0) ? v : T(0);
    case Unary::kRelu6:
      return v > T(0) ? (v < T(6) ? v : T(6)) : T(0);
    case Unary::kCopy:
      return v;
  }
  return v;
}

template <typename T>
bool all_finite(const Tensor4<T>& x);

}  // namespace bcpnet

#endif  // BCPNET_TENSOR_HPP_
