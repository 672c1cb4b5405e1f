#include "advnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "advnet/error.hpp"

namespace advnet {
namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::size_t kCifarPixels = 3 * 32 * 32;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) |
         (std::uint32_t(b[at + 2]) << 8) | std::uint32_t(b[at + 3]);
}

void put_be32(Bytes& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void require_size(std::span<const std::uint8_t> b, std::size_t need, const char* what) {
  if (b.size() < need) {
    throw ParseError(b.size(), std::string(what) + ": expected " + std::to_string(need) +
                                   " bytes, got " + std::to_string(b.size()));
  }
}

}  // namespace

void Dataset::validate() const {
  if (labels.empty()) throw ValidationError("dataset is empty");
  if (classes < 2) throw ValidationError("dataset needs at least 2 classes");
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw ValidationError("dataset images " + shape_string(images.shape()) + " do not match " +
                          std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!(images[i] >= 0.0f && images[i] <= 1.0f)) {
      throw ValidationError("pixel " + std::to_string(i) + " outside [0, 1]");
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " of sample " +
                            std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  Dataset d;
  d.images = images.slice_rows(begin, end);
  d.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                  labels.begin() + static_cast<std::ptrdiff_t>(end));
  d.classes = classes;
  d.split = split;
  return d;
}

Dataset Dataset::gather(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw ConfigError("cannot gather zero samples");
  Shape shape = images.shape();
  shape[0] = indices.size();
  Dataset d;
  d.images = Tensor<float>(shape);
  const std::size_t per = images.size() / images.dim(0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ConfigError("sample index " + std::to_string(indices[i]) + " out of range");
    std::copy_n(images.ptr() + indices[i] * per, per, d.images.ptr() + i * per);
    d.labels.push_back(labels[indices[i]]);
  }
  d.classes = classes;
  d.split = split;
  return d;
}

ChannelStats channel_stats(const Dataset& data) {
  const std::size_t n = data.size(), c = data.channels(), hw = data.height() * data.width();
  ChannelStats s;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = data.images.ptr() + (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) {
        sum += p[j];
        sq += double(p[j]) * p[j];
      }
    }
    const double count = double(n * hw), mean = sum / count;
    const double var = std::max(sq / count - mean * mean, 0.0);
    s.mean.push_back(static_cast<float>(mean));
    s.stddev.push_back(static_cast<float>(std::max(std::sqrt(var), 1e-3)));
  }
  return s;
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  Bytes b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path, "read failed");
  return b;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path, "write failed");
}

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                  int classes) {
  if (classes < 2 || classes > 256) throw ConfigError("IDX classes must be in [2, 256]");
  require_size(images, 16, "IDX image header");
  if (read_be32(images, 0) != kIdxImages) throw ParseError(0, "bad IDX image magic");
  const std::uint64_t n = read_be32(images, 4), h = read_be32(images, 8), w = read_be32(images, 12);
  if (n == 0) throw ParseError(4, "IDX image count is zero");
  if (h == 0 || w == 0) throw ParseError(h == 0 ? 8 : 12, "IDX image dimension is zero");
  const unsigned __int128 payload = static_cast<unsigned __int128>(n) * h * w;
  if (payload + 16 != images.size()) {
    const std::string expect = payload > (1ull << 48) ? std::string("an impossible number of")
                                                      : std::to_string(std::uint64_t(payload + 16));
    throw ParseError(std::min<std::size_t>(images.size(), 16),
                     "IDX image file should hold " + expect + " bytes, got " +
                         std::to_string(images.size()));
  }
  require_size(labels, 8, "IDX label header");
  if (read_be32(labels, 0) != kIdxLabels) throw ParseError(0, "bad IDX label magic");
  if (read_be32(labels, 4) != n) {
    throw ParseError(4, "IDX label count " + std::to_string(read_be32(labels, 4)) +
                            " does not match image count " + std::to_string(n));
  }
  if (labels.size() != 8 + n) {
    throw ParseError(std::min<std::size_t>(labels.size(), 8),
                     "IDX label file should hold " + std::to_string(8 + n) + " bytes, got " +
                         std::to_string(labels.size()));
  }
  Dataset d;
  d.classes = classes;
  d.images = Tensor<float>({std::size_t(n), 1, std::size_t(h), std::size_t(w)});
  for (std::size_t i = 0; i < d.images.size(); ++i) d.images[i] = images[16 + i] / 255.0f;
  d.labels.resize(std::size_t(n));
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[8 + i];
    if (label >= classes) {
      throw ParseError(8 + i, "label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
    d.labels[i] = label;
  }
  return d;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, int classes) {
  const Bytes img = read_file(images_path);
  const Bytes lbl = read_file(labels_path);
  try {
    return parse_idx(img, lbl, classes);
  } catch (const ParseError& e) {
    throw ParseError(e.offset(), images_path + " / " + labels_path + ": " + e.what());
  }
}

Bytes encode_idx_images(const Dataset& data) {
  if (data.channels() != 1) throw ConfigError("IDX images must have one channel");
  Bytes out;
  out.reserve(16 + data.images.size());
  put_be32(out, kIdxImages);
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  put_be32(out, static_cast<std::uint32_t>(data.height()));
  put_be32(out, static_cast<std::uint32_t>(data.width()));
  for (float v : data.images.data()) out.push_back(to_byte(v));
  return out;
}

Bytes encode_idx_labels(const Dataset& data) {
  Bytes out;
  put_be32(out, kIdxLabels);
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels) out.push_back(static_cast<std::uint8_t>(l));
  return out;
}

void write_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path) {
  write_file(images_path, encode_idx_images(data));
  write_file(labels_path, encode_idx_labels(data));
}

Dataset parse_cifar(std::span<const std::uint8_t> bytes, int label_bytes) {
  if (label_bytes != 1 && label_bytes != 2) throw ConfigError("CIFAR label bytes must be 1 or 2");
  const std::size_t record = std::size_t(label_bytes) + kCifarPixels;
  if (bytes.empty()) throw ParseError(0, "CIFAR file is empty");
  if (bytes.size() % record != 0) {
    throw ParseError(bytes.size() - bytes.size() % record,
                     "CIFAR file size " + std::to_string(bytes.size()) +
                         " is not a multiple of the record size " + std::to_string(record));
  }
  const std::size_t n = bytes.size() / record;
  Dataset d;
  d.classes = label_bytes == 1 ? 10 : 100;
  d.images = Tensor<float>({n, 3, 32, 32});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = i * record;
    const int label = bytes[at + std::size_t(label_bytes) - 1];
    if (label >= d.classes) {
      throw ParseError(at + std::size_t(label_bytes) - 1,
                       "label " + std::to_string(label) + " outside [0, " + std::to_string(d.classes) + ")");
    }
    d.labels[i] = label;
    float* out = d.images.ptr() + i * kCifarPixels;
    const std::uint8_t* in = bytes.data() + at + std::size_t(label_bytes);
    for (std::size_t j = 0; j < kCifarPixels; ++j) out[j] = in[j] / 255.0f;
  }
  return d;
}

Dataset load_cifar_binary(const std::vector<std::string>& paths, int label_bytes) {
  if (paths.empty()) throw ConfigError("no CIFAR files given");
  Bytes all;
  for (const auto& p : paths) {
    const Bytes b = read_file(p);
    const std::size_t record = std::size_t(label_bytes) + kCifarPixels;
    if (b.empty() || b.size() % record != 0) {
      try {
        parse_cifar(b, label_bytes);
      } catch (const ParseError& e) {
        throw ParseError(e.offset(), p + ": " + e.what());
      }
    }
    all.insert(all.end(), b.begin(), b.end());
  }
  return parse_cifar(all, label_bytes);
}

Bytes encode_cifar(const Dataset& data, int label_bytes) {
  if (data.channels() != 3 || data.height() != 32 || data.width() != 32) {
    throw ConfigError("CIFAR records hold 3 x 32 x 32 images");
  }
  if (label_bytes != 1 && label_bytes != 2) throw ConfigError("CIFAR label bytes must be 1 or 2");
  Bytes out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (label_bytes == 2) out.push_back(0);
    out.push_back(static_cast<std::uint8_t>(data.labels[i]));
    const float* p = data.images.ptr() + i * kCifarPixels;
    for (std::size_t j = 0; j < kCifarPixels; ++j) out.push_back(to_byte(p[j]));
  }
  return out;
}

Dataset synth_dataset(const SynthSpec& spec) {
  if (spec.classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (spec.n < 2 * std::size_t(spec.classes)) {
    throw ConfigError("synthetic data needs n >= 2 * classes");
  }
  if (spec.image_size < 8) throw ConfigError("synthetic image size must be >= 8");
  if (!(spec.noise >= 0.0)) throw ConfigError("synthetic noise must be >= 0");
  if (!(spec.contrast > 0.0 && spec.contrast <= 1.0)) throw ConfigError("synthetic contrast must be in (0, 1]");
  const auto S = std::size_t(spec.image_size);
  const double s = double(S), center = (s - 1) / 2;

  // One noiseless template per class.
  std::vector<std::vector<float>> templates(std::size_t(spec.classes), std::vector<float>(S * S));
  for (int c = 0; c < spec.classes; ++c) {
    auto& t = templates[std::size_t(c)];
    if (spec.kind == SynthKind::Blobs) {
      const double angle = 2 * std::numbers::pi * c / spec.classes;
      const double cy = center + s / 4 * std::sin(angle), cx = center + s / 4 * std::cos(angle);
      const double width = s / 8;
      for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          t[y * S + x] = static_cast<float>(std::exp(-d2 / (2 * width * width)));
        }
    } else {
      const double radius = s * (0.12 + 0.3 * c / std::max(1, spec.classes - 1));
      const double width = s / 16;
      for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
          const double d = std::hypot(y - center, x - center) - radius;
          t[y * S + x] = static_cast<float>(std::exp(-d * d / (2 * width * width)));
        }
    }
  }

  Dataset d;
  d.classes = spec.classes;
  d.images = Tensor<float>({spec.n, 1, S, S});
  d.labels.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const int c = int(i % std::size_t(spec.classes));
    d.labels[i] = c;
    Rng rng(Rng::derive(spec.seed, i));
    float* out = d.images.ptr() + i * S * S;
    const auto& t = templates[std::size_t(c)];
    const double base = 0.5 * (1.0 - spec.contrast);
    for (std::size_t j = 0; j < S * S; ++j) {
      const double clean = base + spec.contrast * t[j];
      const double v = spec.noise > 0 ? clean + spec.noise * rng.normal() : clean;
      out[j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return d;
}

void augment(Tensor<float>& batch, Rng& rng, bool flip, std::size_t pad) {
  const std::size_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  std::vector<float> src(c * h * w);
  for (std::size_t i = 0; i < n; ++i) {
    float* img = batch.ptr() + i * c * h * w;
    std::copy_n(img, src.size(), src.begin());
    const bool mirror = flip && rng.below(2) == 1;
    const std::size_t dy = pad ? rng.below(2 * pad + 1) : pad;
    const std::size_t dx = pad ? rng.below(2 * pad + 1) : pad;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          // Output (y, x) reads padded coordinate (y + dy, x + dx).
          const std::ptrdiff_t sy = std::ptrdiff_t(y + dy) - std::ptrdiff_t(pad);
          std::ptrdiff_t sx = std::ptrdiff_t(x + dx) - std::ptrdiff_t(pad);
          if (mirror) sx = std::ptrdiff_t(w) - 1 - sx;
          float v = 0.0f;
          if (sy >= 0 && sy < std::ptrdiff_t(h) && sx >= 0 && sx < std::ptrdiff_t(w)) {
            v = src[(ch * h + std::size_t(sy)) * w + std::size_t(sx)];
          }
          img[(ch * h + y) * w + x] = v;
        }
  }
}

Bytes encode_netpbm(const Tensor<float>& images, std::size_t index) {
  const std::size_t c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (c != 1 && c != 3) throw ConfigError("images must have 1 or 3 channels to export");
  if (index >= images.dim(0)) throw ConfigError("image index out of range");
  const std::string header =
      std::string(c == 1 ? "P5" : "P6") + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  Bytes out(header.begin(), header.end());
  const float* p = images.ptr() + index * c * h * w;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) out.push_back(to_byte(p[(ch * h + y) * w + x]));
  return out;
}

}  // namespace advnet
