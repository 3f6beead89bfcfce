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
#ifndef BCPNET_MODELIO_HPP_
#define BCPNET_MODELIO_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bcpnet/graph.hpp"
#include "bcpnet/train.hpp"

namespace bcpnet {

// Weights file layout, all little-endian:
//   "BCPW" | version u16 | count u32 | count x entry
//   entry = name_len u16 | name | dtype u8 (0 f32, 1 f64) | rank u8 |
//           rank x dim u32 | prod(dims) scalars
inline constexpr std::uint16_t kWeightsVersion = 1;

template <typename T>
std::vector<std::uint8_t> encode_weights(const WeightStore<T>& store);

// Entries of either dtype are converted to T. Ranks below 4 are padded with
// leading 1s. Throws FormatError with the byte offset of the first bad field.
template <typename T>
WeightStore<T> decode_weights(std::span<const std::uint8_t> bytes);

template <typename T>
void save_weights(const WeightStore<T>& store, const std::string& path);
template <typename T>
WeightStore<T> load_weights(const std::string& path);

// Every slot of `g` present with its shape and nothing else; throws
// WeightStoreError.
template <typename T>
void check_weights(const ModelGraph& g, const WeightStore<T>& store);

// Everything a command needs to build and train a model.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// key = value lines; `#` starts a comment. Unknown or repeated keys, bad
// values and invalid results throw ConfigError naming the line.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);
// Every key, doubles as %.17g. parse_run_config(format_run_config(c)) == c.
std::string format_run_config(const RunConfig& cfg);

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};
using Palette = std::vector<Rgb>;

// Standard Cityscapes colors for 19 classes, evenly spaced hues otherwise.
// Throws ConfigError for 0 or more than 255 classes.
Palette make_palette(std::size_t num_classes);

// 8-bit gray, gray+alpha, RGB, RGBA or palette PNG -> (1, 3, h, w) in [0, 1].
// Alpha is dropped. Throws IoError, or UnsupportedFormatError for 16-bit.
Tensor4<float> read_image(const std::string& path);
// (1, 3, h, w) in [0, 1] -> 8-bit RGB PNG, values rounded and clamped.
void write_image_png(const Tensor4<float>& image, const std::string& path);

// Indexed PNG: pixel index = class, palette entry 255 (ignore) is black.
// Labels outside [0, palette size) other than the ignore index throw
// LabelError.
void write_label_png(const LabelMap& labels, const Palette& palette, const std::string& path);
LabelMap read_label_png(const std::string& path);

// Image blended with class colors at `alpha`; ignored pixels keep the image.
void write_overlay_png(const Tensor4<float>& image, const LabelMap& labels, const Palette& palette,
                       const std::string& path, double alpha = 0.5);

}  // namespace bcpnet

#endif  // BCPNET_MODELIO_HPP_
