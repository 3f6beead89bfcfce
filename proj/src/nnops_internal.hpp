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
#ifndef BCPNET_SRC_NNOPS_INTERNAL_HPP_
#define BCPNET_SRC_NNOPS_INTERNAL_HPP_

#include <algorithm>
#include <cstddef>

namespace bcpnet::internal {

// Output indices [lo, hi) whose input index o * stride + shift is in bounds.
struct WindowRange {
  std::size_t lo;
  std::size_t hi;
  std::ptrdiff_t shift;
};

WindowRange valid_range(std::size_t out, std::size_t in, std::size_t offset, std::size_t stride,
                        std::size_t padding);

// In-bounds input span [begin, end) covered by the window of output o.
struct Window {
  std::size_t begin;
  std::size_t end;
};

inline Window window_at(std::size_t o, std::size_t in, std::size_t k, std::size_t stride, std::size_t padding) {
  const auto start = static_cast<std::ptrdiff_t>(o * stride) - static_cast<std::ptrdiff_t>(padding);
  const auto stop = start + static_cast<std::ptrdiff_t>(k);
  return {static_cast<std::size_t>(std::max<std::ptrdiff_t>(start, 0)),
          static_cast<std::size_t>(std::min<std::ptrdiff_t>(stop, static_cast<std::ptrdiff_t>(in)))};
}

}  // namespace bcpnet::internal

#endif  // BCPNET_SRC_NNOPS_INTERNAL_HPP_
