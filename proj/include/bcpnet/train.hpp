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
#ifndef BCPNET_TRAIN_HPP_
#define BCPNET_TRAIN_HPP_

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include "bcpnet/autograd.hpp"
#include "bcpnet/graph.hpp"

namespace bcpnet {

struct TrainConfig {
  double init_lr = 0.1;
  double power = 0.9;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  std::size_t total_iter = 300;
  std::size_t batch = 4;
  std::size_t crop_h = 64;
  std::size_t crop_w = 64;
  double scale_min = 0.5;
  double scale_max = 2.0;
  double flip_prob = 0.5;
  std::uint64_t seed = 0;
  // Size of the rendered synthetic scenes before augmentation.
  std::size_t sample_h = 64;
  std::size_t sample_w = 64;
  std::size_t eval_samples = 32;
  // Global L2 norm cap on the gradient before the SGD step; 0 disables.
  double grad_clip = 1.0;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// init_lr * (1 - iter / total_iter)^power; throws ScheduleError outside
// [0, total_iter].
double poly_lr(const TrainConfig& cfg, std::size_t iter);

// v = momentum * v + g + wd * w; w = w - lr * v. Slots with decay == false
// skip the wd term. Missing velocity entries start at zero.
template <typename T>
void sgd_step(WeightStore<T>& weights, const WeightStore<T>& grads, WeightStore<T>& velocity, double lr,
              const TrainConfig& cfg, const std::vector<ParamSlot>& slots);

inline constexpr std::int32_t kBackground = 0;
inline constexpr std::int32_t kCircle = 1;
inline constexpr std::int32_t kRectangle = 2;
inline constexpr std::size_t kSynthClasses = 3;

struct SynthSample {
  Tensor4<float> image;  // (1, 3, h, w) in [0, 1]
  LabelMap labels;       // (1, h, w)
};

// Colored circles and elongated axis-aligned rectangles on a textured
// background. Shapes lie fully inside the frame and never touch. Pixels on a
// label boundary get the ignore label when ignore_ring is set.
class SynthGenerator {
 public:
  SynthGenerator(std::size_t h, std::size_t w, bool ignore_ring = true);

  // Redraws until every class covers at least 1% of the pixels.
  SynthSample sample(std::mt19937_64& rng) const;

  std::size_t h() const { return h_; }
  std::size_t w() const { return w_; }

 private:
  SynthSample render(std::mt19937_64& rng) const;
  std::size_t h_, w_;
  bool ignore_ring_;
};

// Maps [0, 1] pixels to roughly zero mean, unit spread. Training, evaluation
// and inference all feed the network through this.
inline float normalize_pixel(float v) { return (v - 0.5f) * 4.0f; }
Tensor4<float> normalize_image(const Tensor4<float>& image);

SynthSample hflip(const SynthSample& s);
// Bilinear image, nearest-neighbor labels.
SynthSample rescale(const SynthSample& s, std::size_t h, std::size_t w);
// Window of size (h, w) whose top-left sits at (y0, x0) in a canvas padded
// on the bottom/right with zero pixels and ignore labels as needed.
SynthSample crop_or_pad(const SynthSample& s, std::size_t h, std::size_t w, std::size_t y0, std::size_t x0);

// Random flip, uniform scale in [scale_min, scale_max], random crop.
SynthSample augment(const SynthSample& s, const TrainConfig& cfg, std::mt19937_64& rng);

struct MiouResult {
  std::vector<double> iou;    // 0 where the class is absent from both maps
  std::vector<bool> present;  // union non-empty
  double mean = 0.0;          // over present classes
};

MiouResult miou(const LabelMap& pred, const LabelMap& gt, std::size_t num_classes,
                std::int32_t ignore_index = kIgnoreIndex);

// Running confusion matrix for evaluation over many maps.
class Confusion {
 public:
  explicit Confusion(std::size_t num_classes) : k_(num_classes), m_(num_classes * num_classes, 0) {}
  void add(const LabelMap& pred, const LabelMap& gt, std::int32_t ignore_index = kIgnoreIndex);
  MiouResult result() const;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> m_;  // row gt, column pred
};

struct HistoryRow {
  std::size_t iter = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  WeightStore<float> weights;
  std::vector<HistoryRow> history;
  MiouResult eval;
};

// Deterministic given cfg.seed. Throws TrainingError on a non-finite loss.
// `stop_after` cuts the run short without changing the schedule.
TrainResult train_loop(const ModelGraph& g, const TrainConfig& cfg, const SynthGenerator& data,
                       std::size_t stop_after = static_cast<std::size_t>(-1));

// Held-out evaluation set shared by every run with the same seed.
std::vector<SynthSample> eval_set(const SynthGenerator& data, std::size_t count, std::uint64_t seed);
MiouResult evaluate(const ModelGraph& g, const WeightStore<float>& weights, const std::vector<SynthSample>& set);

// `iter,lr,loss`
void write_history_csv(const std::vector<HistoryRow>& history, std::ostream& os);
// `class,iou` then `mean,<value>`
void write_eval_csv(const MiouResult& r, std::ostream& os);

}  // namespace bcpnet

#endif  // BCPNET_TRAIN_HPP_
