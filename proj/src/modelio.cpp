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
#include "bcpnet/modelio.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace bcpnet {

static_assert(std::endian::native == std::endian::little, "weights I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'B', 'C', 'P', 'W'};

template <typename T>
constexpr std::uint8_t dtype_code() {
  return std::is_same_v<T, float> ? 0 : 1;
}

class Writer {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(U));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, b_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t left() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (left() < n) throw FormatError(std::string("truncated ") + what, pos_);
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path + "'");
  return data;
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> encode_weights(const WeightStore<T>& store) {
  if (store.size() > UINT32_MAX) throw WeightStoreError("too many entries for a weights file");
  Writer w;
  w.bytes(kMagic, 4);
  w.put<std::uint16_t>(kWeightsVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store) {
    if (name.empty() || name.size() > UINT16_MAX) throw WeightStoreError("bad entry name length for '" + name + "'");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.put<std::uint8_t>(dtype_code<T>());
    w.put<std::uint8_t>(4);
    const Shape4 sh = t.shape();
    for (std::size_t d : {sh.n, sh.c, sh.h, sh.w}) {
      if (d > UINT32_MAX) throw WeightStoreError("dimension too large in '" + name + "'");
      w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    }
    w.bytes(t.data().data(), t.size() * sizeof(T));
  }
  return std::move(w.out);
}

template <typename T>
WeightStore<T> decode_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("bad magic", 0);
  const std::size_t vpos = r.pos();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kWeightsVersion) {
    throw FormatError("unsupported weights version " + std::to_string(version), vpos);
  }
  const auto count = r.get<std::uint32_t>("entry count");
  WeightStore<T> out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::size_t start = r.pos();
    const auto len = r.get<std::uint16_t>("name length");
    if (len == 0) throw FormatError("empty entry name", start);
    const auto raw = r.take(len, "entry name");
    std::string name(reinterpret_cast<const char*>(raw.data()), raw.size());
    if (out.count(name)) throw FormatError("duplicate entry '" + name + "'", start);
    const std::size_t dpos = r.pos();
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype > 1) throw FormatError("unknown dtype " + std::to_string(dtype), dpos);
    const std::size_t rpos = r.pos();
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank < 1 || rank > 4) throw FormatError("unsupported rank " + std::to_string(rank), rpos);
    std::size_t dims[4] = {1, 1, 1, 1};
    std::uint64_t numel = 1;
    for (std::size_t i = 0; i < rank; ++i) {
      const std::size_t at = r.pos();
      const auto d = r.get<std::uint32_t>("dims");
      if (d == 0) throw FormatError("zero dimension in '" + name + "'", at);
      dims[4 - rank + i] = d;
      numel *= d;
      if (numel > (std::uint64_t{1} << 40)) throw FormatError("entry '" + name + "' too large", at);
    }
    const Shape4 shape{dims[0], dims[1], dims[2], dims[3]};
    const std::size_t width = dtype == 0 ? 4 : 8;
    const std::size_t dataset_pos = r.pos();
    if (r.left() < numel * width) {
      throw FormatError("entry '" + name + "' needs " + std::to_string(numel * width) + " bytes, " +
                            std::to_string(r.left()) + " left",
                        dataset_pos);
    }
    const auto payload = r.take(numel * width, "data");
    Tensor4<T> t(shape);
    for (std::size_t i = 0; i < numel; ++i) {
      if (dtype == 0) {
        float v;
        std::memcpy(&v, payload.data() + i * 4, 4);
        t[i] = static_cast<T>(v);
      } else {
        double v;
        std::memcpy(&v, payload.data() + i * 8, 8);
        t[i] = static_cast<T>(v);
      }
    }
    out.emplace(std::move(name), std::move(t));
  }
  if (r.left() != 0) throw FormatError(std::to_string(r.left()) + " trailing bytes", r.pos());
  return out;
}

template <typename T>
void save_weights(const WeightStore<T>& store, const std::string& path) {
  write_file(path, encode_weights(store));
}

template <typename T>
WeightStore<T> load_weights(const std::string& path) {
  return decode_weights<T>(read_file(path));
}

template <typename T>
void check_weights(const ModelGraph& g, const WeightStore<T>& store) {
  const auto slots = param_slots(g);
  for (const auto& s : slots) weight_at(store, s.name, s.shape);
  if (store.size() != slots.size()) {
    std::set<std::string> known;
    for (const auto& s : slots) known.insert(s.name);
    for (const auto& [k, v] : store)
      if (!known.count(k)) throw WeightStoreError("unexpected weight '" + k + "'");
  }
}

// ---------------------------------------------------------------------------
// RunConfig

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename U>
U parse_uint(std::string_view v) {
  U out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

double parse_double(std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("expected a finite number, got '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

PoolKind parse_pool(std::string_view v) {
  if (v == "max") return PoolKind::kMax;
  if (v == "avg") return PoolKind::kAvg;
  throw ConfigError("expected max or avg, got '" + std::string(v) + "'");
}

// "ch:blocks:stride:expansion" groups separated by spaces.
std::vector<BackboneStage> parse_stages(std::string_view v) {
  std::vector<BackboneStage> out;
  std::istringstream in{std::string(v)};
  std::string tok;
  while (in >> tok) {
    std::size_t f[4];
    std::string_view rest = tok;
    for (int i = 0; i < 4; ++i) {
      const auto colon = rest.find(':');
      if ((i < 3) != (colon != std::string_view::npos)) {
        throw ConfigError("stage '" + tok + "' must be channels:blocks:stride:expansion");
      }
      f[i] = parse_uint<std::size_t>(rest.substr(0, colon));
      if (i < 3) rest = rest.substr(colon + 1);
    }
    out.push_back({f[0], f[1], f[2], f[3]});
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  const auto& m = model;
  if (m.num_classes < 1 || m.num_classes > 255) throw ConfigError("num_classes must be in [1, 255]");
  if (m.fusion_width < 1) throw ConfigError("fusion_width must be >= 1");
  if (m.ablation.context_pool_k != 3 && m.ablation.context_pool_k != 5) {
    throw ConfigError("context_pool_k must be 3 or 5");
  }
  if (m.backbone.stem_channels < 1) throw ConfigError("stem_channels must be >= 1");
  if (m.backbone.stages.size() != 5) throw ConfigError("backbone needs exactly 5 stages");
  for (const auto& s : m.backbone.stages) {
    if (s.channels < 1 || s.blocks < 1 || s.expansion < 1 || (s.stride != 1 && s.stride != 2)) {
      throw ConfigError("backbone stage needs channels, blocks, expansion >= 1 and stride 1 or 2");
    }
  }
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig c;
  auto& t = c.train;
  auto& m = c.model;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view v = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "repeated key '" + key + "'");
    try {
      if (key == "use_bcp") m.ablation.use_bcp = parse_bool(v);
      else if (key == "context_pool") m.ablation.context_pool_kind = parse_pool(v);
      else if (key == "context_pool_k") m.ablation.context_pool_k = parse_uint<std::size_t>(v);
      else if (key == "num_classes") m.num_classes = parse_uint<std::size_t>(v);
      else if (key == "fusion_width") m.fusion_width = parse_uint<std::size_t>(v);
      else if (key == "stem_channels") m.backbone.stem_channels = parse_uint<std::size_t>(v);
      else if (key == "stages") m.backbone.stages = parse_stages(v);
      else if (key == "init_lr") t.init_lr = parse_double(v);
      else if (key == "power") t.power = parse_double(v);
      else if (key == "momentum") t.momentum = parse_double(v);
      else if (key == "weight_decay") t.weight_decay = parse_double(v);
      else if (key == "total_iter") t.total_iter = parse_uint<std::size_t>(v);
      else if (key == "batch") t.batch = parse_uint<std::size_t>(v);
      else if (key == "crop_h") t.crop_h = parse_uint<std::size_t>(v);
      else if (key == "crop_w") t.crop_w = parse_uint<std::size_t>(v);
      else if (key == "scale_min") t.scale_min = parse_double(v);
      else if (key == "scale_max") t.scale_max = parse_double(v);
      else if (key == "flip_prob") t.flip_prob = parse_double(v);
      else if (key == "seed") t.seed = parse_uint<std::uint64_t>(v);
      else if (key == "sample_h") t.sample_h = parse_uint<std::size_t>(v);
      else if (key == "sample_w") t.sample_w = parse_uint<std::size_t>(v);
      else if (key == "eval_samples") t.eval_samples = parse_uint<std::size_t>(v);
      else if (key == "grad_clip") t.grad_clip = parse_double(v);
      else throw ConfigError("unknown key '" + key + "'");
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string format_run_config(const RunConfig& c) {
  const auto& m = c.model;
  const auto& t = c.train;
  std::ostringstream o;
  o << "# model\n";
  o << "use_bcp = " << (m.ablation.use_bcp ? "true" : "false") << "\n";
  o << "context_pool = " << (m.ablation.context_pool_kind == PoolKind::kMax ? "max" : "avg") << "\n";
  o << "context_pool_k = " << m.ablation.context_pool_k << "\n";
  o << "num_classes = " << m.num_classes << "\n";
  o << "fusion_width = " << m.fusion_width << "\n";
  o << "stem_channels = " << m.backbone.stem_channels << "\n";
  o << "stages =";
  for (const auto& s : m.backbone.stages) o << " " << s.channels << ":" << s.blocks << ":" << s.stride << ":" << s.expansion;
  o << "\n# training\n";
  o << "init_lr = " << fmt_double(t.init_lr) << "\n";
  o << "power = " << fmt_double(t.power) << "\n";
  o << "momentum = " << fmt_double(t.momentum) << "\n";
  o << "weight_decay = " << fmt_double(t.weight_decay) << "\n";
  o << "total_iter = " << t.total_iter << "\n";
  o << "batch = " << t.batch << "\n";
  o << "crop_h = " << t.crop_h << "\n";
  o << "crop_w = " << t.crop_w << "\n";
  o << "scale_min = " << fmt_double(t.scale_min) << "\n";
  o << "scale_max = " << fmt_double(t.scale_max) << "\n";
  o << "flip_prob = " << fmt_double(t.flip_prob) << "\n";
  o << "seed = " << t.seed << "\n";
  o << "sample_h = " << t.sample_h << "\n";
  o << "sample_w = " << t.sample_w << "\n";
  o << "eval_samples = " << t.eval_samples << "\n";
  o << "grad_clip = " << fmt_double(t.grad_clip) << "\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// PNG

Palette make_palette(std::size_t num_classes) {
  if (num_classes < 1 || num_classes > 255) throw ConfigError("palette needs 1..255 classes");
  if (num_classes == 19) {
    return {{128, 64, 128}, {244, 35, 232}, {70, 70, 70},   {102, 102, 156}, {190, 153, 153},
            {153, 153, 153}, {250, 170, 30}, {220, 220, 0},  {107, 142, 35},  {152, 251, 152},
            {70, 130, 180},  {220, 20, 60},  {255, 0, 0},    {0, 0, 142},     {0, 0, 70},
            {0, 60, 100},    {0, 80, 100},   {0, 0, 230},    {119, 11, 32}};
  }
  Palette p;
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double h = 6.0 * static_cast<double>(k) / static_cast<double>(num_classes);
    const int i = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double rgb[6][3] = {{1, f, 0}, {1 - f, 1, 0}, {0, 1, f}, {0, 1 - f, 1}, {f, 0, 1}, {1, 0, 1 - f}};
    auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); };
    p.push_back({q(rgb[i][0]), q(rgb[i][1]), q(rgb[i][2])});
  }
  return p;
}

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_rgb(const std::vector<std::uint8_t>& rgb, std::size_t h, std::size_t w, const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, rgb.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot write '" + path + "': " + msg);
  }
}

void check_image(const Tensor4<float>& image) {
  if (image.shape().n != 1 || image.shape().c != 3) throw ShapeError("expected a (1, 3, h, w) image");
}

struct PngReadState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* file = nullptr;
  ~PngReadState() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (file) std::fclose(file);
  }
};

[[noreturn]] void quiet_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }
void quiet_warning(png_structp, png_const_charp) {}

// libpng reports errors by longjmp, so neither function owns anything with a
// destructor. Both return false on a libpng error.
bool read_header(PngReadState& s, png_uint_32& w, png_uint_32& h, int& depth, int& color) {
  if (setjmp(png_jmpbuf(s.png))) return false;
  png_init_io(s.png, s.file);
  png_read_info(s.png, s.info);
  w = png_get_image_width(s.png, s.info);
  h = png_get_image_height(s.png, s.info);
  depth = png_get_bit_depth(s.png, s.info);
  color = png_get_color_type(s.png, s.info);
  if (depth < 8) png_set_packing(s.png);
  png_read_update_info(s.png, s.info);
  return true;
}

bool read_rows(PngReadState& s, png_bytepp rows) {
  if (setjmp(png_jmpbuf(s.png))) return false;
  png_read_image(s.png, rows);
  png_read_end(s.png, nullptr);
  return true;
}

}  // namespace

Tensor4<float> read_image(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot read PNG '" + path + "': " + msg);
  }
  if (img.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&img);
    throw UnsupportedFormatError("'" + path + "' is a 16-bit PNG; only 8-bit is supported");
  }
  img.format = PNG_FORMAT_RGB;
  const std::size_t w = img.width, h = img.height;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode PNG '" + path + "': " + msg);
  }
  Tensor4<float> out(Shape4{1, 3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(0, c, y, x) = static_cast<float>(buf[(y * w + x) * 3 + c]) / 255.0f;
  return out;
}

void write_image_png(const Tensor4<float>& image, const std::string& path) {
  check_image(image);
  const std::size_t h = image.shape().h, w = image.shape().w;
  std::vector<std::uint8_t> rgb(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) rgb[(y * w + x) * 3 + c] = to_byte(image.at(0, c, y, x));
  write_rgb(rgb, h, w, path);
}

void write_label_png(const LabelMap& labels, const Palette& palette, const std::string& path) {
  if (labels.n() != 1) throw ShapeError("label PNG holds a single map");
  if (palette.empty() || palette.size() > 255) throw ConfigError("palette needs 1..255 entries");
  std::vector<std::uint8_t> idx(labels.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::int32_t v = labels.data()[i];
    if (v != kIgnoreIndex && (v < 0 || v >= static_cast<std::int32_t>(palette.size()))) {
      throw LabelError("label " + std::to_string(v) + " has no palette entry");
    }
    idx[i] = static_cast<std::uint8_t>(v);
  }
  std::vector<std::uint8_t> cmap(256 * 3, 0);
  for (std::size_t k = 0; k < palette.size(); ++k) {
    cmap[k * 3] = palette[k].r;
    cmap[k * 3 + 1] = palette[k].g;
    cmap[k * 3 + 2] = palette[k].b;
  }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(labels.w());
  img.height = static_cast<png_uint_32>(labels.h());
  img.format = PNG_FORMAT_RGB_COLORMAP;
  img.colormap_entries = 256;
  if (!png_image_write_to_file(&img, path.c_str(), 0, idx.data(), 0, cmap.data())) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot write '" + path + "': " + msg);
  }
}

LabelMap read_label_png(const std::string& path) {
  PngReadState s;
  s.file = std::fopen(path.c_str(), "rb");
  if (!s.file) throw IoError("cannot open '" + path + "'");
  s.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, quiet_error, quiet_warning);
  if (!s.png) throw IoError("libpng init failed");
  s.info = png_create_info_struct(s.png);
  if (!s.info) throw IoError("libpng init failed");
  png_uint_32 w = 0, h = 0;
  int depth = 0, color = 0;
  if (!read_header(s, w, h, depth, color)) throw IoError("malformed PNG '" + path + "'");
  if (depth == 16) throw UnsupportedFormatError("'" + path + "' is a 16-bit PNG; only 8-bit is supported");
  if (color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY) {
    throw UnsupportedFormatError("'" + path + "' is not an indexed or gray label PNG");
  }
  std::vector<std::uint8_t> pixels(std::size_t{w} * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + std::size_t{y} * w;
  if (!read_rows(s, rows.data())) throw IoError("malformed PNG '" + path + "'");
  LabelMap out(1, h, w);
  for (std::size_t i = 0; i < pixels.size(); ++i) out.data()[i] = pixels[i];
  return out;
}

void write_overlay_png(const Tensor4<float>& image, const LabelMap& labels, const Palette& palette,
                       const std::string& path, double alpha) {
  check_image(image);
  if (labels.n() != 1 || labels.h() != image.shape().h || labels.w() != image.shape().w) {
    throw ShapeError("overlay: label map does not match the image");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("overlay alpha must be in [0, 1]");
  const std::size_t h = image.shape().h, w = image.shape().w;
  std::vector<std::uint8_t> rgb(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::int32_t v = labels.at(0, y, x);
      const bool paint = v != kIgnoreIndex;
      if (paint && (v < 0 || v >= static_cast<std::int32_t>(palette.size()))) {
        throw LabelError("label " + std::to_string(v) + " has no palette entry");
      }
      for (std::size_t c = 0; c < 3; ++c) {
        float px = image.at(0, c, y, x);
        if (paint) {
          const Rgb col = palette[static_cast<std::size_t>(v)];
          const float k = (c == 0 ? col.r : c == 1 ? col.g : col.b) / 255.0f;
          px = static_cast<float>((1.0 - alpha) * px + alpha * k);
        }
        rgb[(y * w + x) * 3 + c] = to_byte(px);
      }
    }
  write_rgb(rgb, h, w, path);
}

#define BCPNET_INSTANTIATE(T)                                                          \
  template std::vector<std::uint8_t> encode_weights<T>(const WeightStore<T>&);         \
  template WeightStore<T> decode_weights<T>(std::span<const std::uint8_t>);           \
  template void save_weights<T>(const WeightStore<T>&, const std::string&);            \
  template WeightStore<T> load_weights<T>(const std::string&);                         \
  template void check_weights<T>(const ModelGraph&, const WeightStore<T>&);

BCPNET_INSTANTIATE(float)
BCPNET_INSTANTIATE(double)

#undef BCPNET_INSTANTIATE

}  // namespace bcpnet
