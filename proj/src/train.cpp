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
#include "bcpnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace bcpnet {

void TrainConfig::validate() const {
  if (!(init_lr > 0.0) || !std::isfinite(init_lr)) throw ConfigError("init_lr must be positive");
  if (!(power >= 0.0)) throw ConfigError("power must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (total_iter < 1) throw ConfigError("total_iter must be >= 1");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (crop_h < 1 || crop_w < 1) throw ConfigError("crop must be at least 1x1");
  if (!(scale_min > 0.0) || !(scale_min <= scale_max)) throw ConfigError("scale range must satisfy 0 < min <= max");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must be in [0, 1]");
  if (sample_h < 8 || sample_w < 8) throw ConfigError("synthetic samples must be at least 8x8");
  if (eval_samples < 1) throw ConfigError("eval_samples must be >= 1");
  if (!(grad_clip >= 0.0) || !std::isfinite(grad_clip)) throw ConfigError("grad_clip must be >= 0");
}

double poly_lr(const TrainConfig& cfg, std::size_t iter) {
  if (iter > cfg.total_iter) {
    throw ScheduleError("iteration " + std::to_string(iter) + " outside [0, " + std::to_string(cfg.total_iter) + "]");
  }
  const double frac = static_cast<double>(iter) / static_cast<double>(cfg.total_iter);
  return cfg.init_lr * std::pow(1.0 - frac, cfg.power);
}

template <typename T>
void sgd_step(WeightStore<T>& weights, const WeightStore<T>& grads, WeightStore<T>& velocity, double lr,
              const TrainConfig& cfg, const std::vector<ParamSlot>& slots) {
  const T m = static_cast<T>(cfg.momentum);
  const T step = static_cast<T>(lr);
  for (const auto& slot : slots) {
    auto wi = weights.find(slot.name);
    auto gi = grads.find(slot.name);
    if (wi == weights.end() || gi == grads.end()) throw ShapeError("sgd_step: slot '" + slot.name + "' missing");
    Tensor4<T>& w = wi->second;
    const Tensor4<T>& g = gi->second;
    if (w.shape() != g.shape()) throw ShapeError("sgd_step: gradient shape mismatch for '" + slot.name + "'");
    auto [vi, fresh] = velocity.try_emplace(slot.name, w.shape());
    Tensor4<T>& v = vi->second;
    if (v.shape() != w.shape()) throw ShapeError("sgd_step: velocity shape mismatch for '" + slot.name + "'");
    const T wd = slot.decay ? static_cast<T>(cfg.weight_decay) : T(0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = m * v[i] + g[i] + wd * w[i];
      w[i] = w[i] - step * v[i];
    }
  }
}

namespace {

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  const double f = h * 6.0;
  const int i = static_cast<int>(std::floor(f)) % 6;
  const double frac = f - std::floor(f);
  const double p = v * (1.0 - s), q = v * (1.0 - s * frac), t = v * (1.0 - s * (1.0 - frac));
  const double table[6][3] = {{v, t, p}, {q, v, p}, {p, v, t}, {p, q, v}, {t, p, v}, {v, p, q}};
  for (int c = 0; c < 3; ++c) rgb[c] = table[i][c];
}

}  // namespace

SynthGenerator::SynthGenerator(std::size_t h, std::size_t w, bool ignore_ring) : h_(h), w_(w), ignore_ring_(ignore_ring) {
  if (h < 8 || w < 8) throw ConfigError("synthetic samples must be at least 8x8");
}

SynthSample SynthGenerator::render(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  SynthSample s{Tensor4<float>(Shape4{1, 3, h_, w_}), LabelMap(1, h_, w_, kBackground)};
  // Low-saturation textured background; shapes carry saturated colors.
  const double gray = range(0.3, 0.7);
  double base[3], amp[3], phase[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = gray + range(-0.05, 0.05);
    amp[c] = range(0.05, 0.15);
    phase[c] = range(0.0, 6.283185307179586);
  }
  const double fy = range(0.1, 0.6), fx = range(0.1, 0.6);
  for (std::size_t y = 0; y < h_; ++y)
    for (std::size_t x = 0; x < w_; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = base[c] + amp[c] * std::sin(fy * double(y) + fx * double(x) + phase[c]) + range(-0.05, 0.05);
        s.image.at(0, c, y, x) = static_cast<float>(v);
      }

  // Round blobs vs elongated bars, fully inside the frame and not touching.
  const double side = static_cast<double>(std::min(h_, w_));
  const int shapes = 2 + static_cast<int>(rng() % 2);
  struct Box {
    double y0, y1, x0, x1;
  };
  std::vector<Box> placed;
  for (int k = 0; k < shapes; ++k) {
    const std::int32_t cls = k == 0 ? kCircle : k == 1 ? kRectangle : (rng() % 2 ? kCircle : kRectangle);
    double color[3];
    hsv_to_rgb(range(0.0, 1.0), range(0.6, 1.0), range(0.6, 1.0), color);
    double r = 0.0, hh = 0.0, hw = 0.0;
    if (cls == kCircle) {
      r = range(side / 10.0, side / 6.0);
      hh = hw = r;
    } else {
      const double thin = range(side / 20.0, side / 12.0);
      const double lng = thin * range(2.5, 4.0);
      const bool vertical = rng() % 2;
      hh = vertical ? lng : thin;
      hw = vertical ? thin : lng;
    }
    const double gap = 2.0;
    bool fits = false;
    double cy = 0.0, cx = 0.0;
    for (int attempt = 0; attempt < 20 && !fits; ++attempt) {
      cy = range(hh + 1.0, double(h_) - hh - 1.0);
      cx = range(hw + 1.0, double(w_) - hw - 1.0);
      fits = std::none_of(placed.begin(), placed.end(), [&](const Box& b) {
        return cy + hh + gap > b.y0 && cy - hh - gap < b.y1 && cx + hw + gap > b.x0 && cx - hw - gap < b.x1;
      });
    }
    if (!fits) continue;
    placed.push_back({cy - hh, cy + hh, cx - hw, cx + hw});
    for (std::size_t y = 0; y < h_; ++y)
      for (std::size_t x = 0; x < w_; ++x) {
        const double dy = double(y) + 0.5 - cy, dx = double(x) + 0.5 - cx;
        const bool inside = cls == kCircle ? dy * dy + dx * dx <= r * r : std::abs(dy) <= hh && std::abs(dx) <= hw;
        if (!inside) continue;
        s.labels.at(0, y, x) = cls;
        for (std::size_t c = 0; c < 3; ++c) s.image.at(0, c, y, x) = static_cast<float>(color[c] + range(-0.05, 0.05));
      }
  }
  for (float& v : s.image.data()) v = std::clamp(v, 0.0f, 1.0f);

  if (ignore_ring_) {
    const LabelMap clean = s.labels;
    for (std::size_t y = 0; y < h_; ++y)
      for (std::size_t x = 0; x < w_; ++x) {
        const std::int32_t v = clean.at(0, y, x);
        const bool edge = (y > 0 && clean.at(0, y - 1, x) != v) || (y + 1 < h_ && clean.at(0, y + 1, x) != v) ||
                          (x > 0 && clean.at(0, y, x - 1) != v) || (x + 1 < w_ && clean.at(0, y, x + 1) != v);
        if (edge) s.labels.at(0, y, x) = kIgnoreIndex;
      }
  }
  return s;
}

SynthSample SynthGenerator::sample(std::mt19937_64& rng) const {
  const std::size_t need = (h_ * w_ + 99) / 100;
  for (;;) {
    SynthSample s = render(rng);
    std::size_t counts[kSynthClasses] = {0, 0, 0};
    for (std::int32_t v : s.labels.data())
      if (v >= 0 && v < static_cast<std::int32_t>(kSynthClasses)) ++counts[v];
    if (std::all_of(std::begin(counts), std::end(counts), [&](std::size_t c) { return c >= need; })) return s;
  }
}

Tensor4<float> normalize_image(const Tensor4<float>& image) {
  Tensor4<float> out = image;
  for (float& v : out.data()) v = normalize_pixel(v);
  return out;
}

SynthSample hflip(const SynthSample& s) {
  const std::size_t h = s.labels.h(), w = s.labels.w();
  SynthSample out{Tensor4<float>(s.image.shape()), LabelMap(1, h, w)};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      out.labels.at(0, y, x) = s.labels.at(0, y, w - 1 - x);
      for (std::size_t c = 0; c < 3; ++c) out.image.at(0, c, y, x) = s.image.at(0, c, y, w - 1 - x);
    }
  return out;
}

SynthSample rescale(const SynthSample& s, std::size_t h, std::size_t w) {
  const std::size_t ih = s.labels.h(), iw = s.labels.w();
  SynthSample out{bilinear_resize(s.image, h, w), LabelMap(1, h, w)};
  auto nearest = [](std::size_t d, std::size_t in, std::size_t o) {
    const auto v = static_cast<std::size_t>((static_cast<double>(d) + 0.5) * static_cast<double>(in) /
                                            static_cast<double>(o));
    return std::min(v, in - 1);
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.labels.at(0, y, x) = s.labels.at(0, nearest(y, ih, h), nearest(x, iw, w));
  return out;
}

SynthSample crop_or_pad(const SynthSample& s, std::size_t h, std::size_t w, std::size_t y0, std::size_t x0) {
  const std::size_t ih = s.labels.h(), iw = s.labels.w();
  SynthSample out{Tensor4<float>(Shape4{1, 3, h, w}), LabelMap(1, h, w, kIgnoreIndex)};
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t sy = y0 + y;
    if (sy >= ih) break;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sx = x0 + x;
      if (sx >= iw) break;
      out.labels.at(0, y, x) = s.labels.at(0, sy, sx);
      for (std::size_t c = 0; c < 3; ++c) out.image.at(0, c, y, x) = s.image.at(0, c, sy, sx);
    }
  }
  return out;
}

SynthSample augment(const SynthSample& s, const TrainConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool flip = u(rng) < cfg.flip_prob;
  const double scale = cfg.scale_min + (cfg.scale_max - cfg.scale_min) * u(rng);
  SynthSample cur = flip ? hflip(s) : s;
  const auto nh = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(double(cur.labels.h()) * scale)));
  const auto nw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(double(cur.labels.w()) * scale)));
  if (nh != cur.labels.h() || nw != cur.labels.w()) cur = rescale(cur, nh, nw);
  auto offset = [&](std::size_t have, std::size_t want) -> std::size_t {
    if (have <= want) return 0;
    return std::uniform_int_distribution<std::size_t>(0, have - want)(rng);
  };
  const std::size_t y0 = offset(nh, cfg.crop_h);
  const std::size_t x0 = offset(nw, cfg.crop_w);
  return crop_or_pad(cur, cfg.crop_h, cfg.crop_w, y0, x0);
}

void Confusion::add(const LabelMap& pred, const LabelMap& gt, std::int32_t ignore_index) {
  if (pred.n() != gt.n() || pred.h() != gt.h() || pred.w() != gt.w()) throw ShapeError("miou: label map shape mismatch");
  const auto k = static_cast<std::int32_t>(k_);
  const auto p = pred.data();
  const auto g = gt.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] == ignore_index) continue;
    if (g[i] < 0 || g[i] >= k) throw LabelError("ground truth label " + std::to_string(g[i]) + " out of range");
    if (p[i] < 0 || p[i] >= k) throw LabelError("predicted label " + std::to_string(p[i]) + " out of range");
    ++m_[static_cast<std::size_t>(g[i]) * k_ + static_cast<std::size_t>(p[i])];
  }
}

MiouResult Confusion::result() const {
  MiouResult r;
  r.iou.assign(k_, 0.0);
  r.present.assign(k_, false);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < k_; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k_; ++j) {
      row += m_[c * k_ + j];
      col += m_[j * k_ + c];
    }
    const std::uint64_t tp = m_[c * k_ + c];
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    r.present[c] = true;
    r.iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    sum += r.iou[c];
    ++n;
  }
  r.mean = n ? sum / static_cast<double>(n) : 0.0;
  return r;
}

MiouResult miou(const LabelMap& pred, const LabelMap& gt, std::size_t num_classes, std::int32_t ignore_index) {
  Confusion c(num_classes);
  c.add(pred, gt, ignore_index);
  return c.result();
}

std::vector<SynthSample> eval_set(const SynthGenerator& data, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eed0e7a1ULL);
  std::vector<SynthSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(data.sample(rng));
  return out;
}

MiouResult evaluate(const ModelGraph& g, const WeightStore<float>& weights, const std::vector<SynthSample>& set) {
  Confusion c(g.num_classes);
  for (const auto& s : set) {
    const auto st = forward(g, weights, normalize_image(s.image), ForwardMode::kInference);
    c.add(argmax_labels(st.logits()), s.labels);
  }
  return c.result();
}

TrainResult train_loop(const ModelGraph& g, const TrainConfig& cfg, const SynthGenerator& data,
                       std::size_t stop_after) {
  cfg.validate();
  if (g.num_classes != kSynthClasses) {
    throw ConfigError("synthetic training needs a " + std::to_string(kSynthClasses) + "-class graph");
  }
  TrainResult r;
  r.weights = init_weights<float>(g, cfg.seed);
  const auto slots = param_slots(g);
  WeightStore<float> velocity;
  std::mt19937_64 rng(cfg.seed);

  Tensor4<float> x(Shape4{cfg.batch, 3, cfg.crop_h, cfg.crop_w});
  LabelMap labels(cfg.batch, cfg.crop_h, cfg.crop_w);
  const std::size_t plane = cfg.crop_h * cfg.crop_w;
  const std::size_t iters = std::min(cfg.total_iter, stop_after);
  r.history.reserve(iters);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const SynthSample s = augment(data.sample(rng), cfg, rng);
      const auto src = s.image.data();
      std::transform(src.begin(), src.end(), x.plane(b, 0), normalize_pixel);
      std::copy(s.labels.data().begin(), s.labels.data().end(), labels.data().begin() + b * plane);
    }
    const auto st = forward(g, r.weights, x);
    const auto loss = softmax_cross_entropy(st.logits(), labels);
    if (!std::isfinite(loss.loss)) {
      throw TrainingError("loss diverged at iteration " + std::to_string(it));
    }
    auto grads = backward(g, r.weights, st, loss.grad);
    const double lr = poly_lr(cfg, it);
    r.history.push_back({it, lr, static_cast<double>(loss.loss)});
    if (cfg.grad_clip > 0.0) {
      double ss = 0.0;
      for (const auto& [name, t] : grads.params)
        for (float v : t.data()) ss += double(v) * v;
      const double norm = std::sqrt(ss);
      if (norm > cfg.grad_clip) {
        const float f = static_cast<float>(cfg.grad_clip / norm);
        for (auto& [name, t] : grads.params)
          for (float& v : t.data()) v *= f;
      }
    }
    sgd_step(r.weights, grads.params, velocity, lr, cfg, slots);
  }
  r.eval = evaluate(g, r.weights, eval_set(data, cfg.eval_samples, cfg.seed));
  return r;
}

void write_history_csv(const std::vector<HistoryRow>& history, std::ostream& os) {
  os << "iter,lr,loss\n";
  char buf[96];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.9g\n", h.iter, h.lr, h.loss);
    os << buf;
  }
}

void write_eval_csv(const MiouResult& r, std::ostream& os) {
  os << "class,iou\n";
  char buf[64];
  for (std::size_t c = 0; c < r.iou.size(); ++c) {
    if (r.present[c]) {
      std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", c, r.iou[c]);
    } else {
      std::snprintf(buf, sizeof(buf), "%zu,\n", c);
    }
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "mean,%.6f\n", r.mean);
  os << buf;
}

template void sgd_step<float>(WeightStore<float>&, const WeightStore<float>&, WeightStore<float>&, double,
                              const TrainConfig&, const std::vector<ParamSlot>&);
template void sgd_step<double>(WeightStore<double>&, const WeightStore<double>&, WeightStore<double>&, double,
                               const TrainConfig&, const std::vector<ParamSlot>&);

}  // namespace bcpnet
