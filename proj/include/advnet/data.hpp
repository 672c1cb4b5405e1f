#pragma once

// Datasets in [0, 1] pixel space and the file formats that produce them.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advnet/rng.hpp"
#include "advnet/tensor.hpp"

namespace advnet {

struct Dataset {
  Tensor<float> images;  // N x C x H x W
  std::vector<int> labels;
  int classes = 0;
  std::string split = "train";

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }

  // Pixels in [0, 1], labels in [0, classes), N > 0. Throws ValidationError.
  void validate() const;

  // Samples [begin, end) / the listed samples, in order.
  Dataset slice(std::size_t begin, std::size_t end) const;
  Dataset gather(const std::vector<std::size_t>& indices) const;
};

struct ChannelStats {
  std::vector<float> mean, stddev;
};
ChannelStats channel_stats(const Dataset& data);

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

// IDX: big-endian magic 0x00000803 (images, N x H x W) / 0x00000801
// (labels, N), unsigned-byte payloads. Errors are ParseError with offsets.
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                  int classes = 10);
Dataset load_idx(const std::string& images_path, const std::string& labels_path, int classes = 10);
// Pixels are stored as round(255 v).
Bytes encode_idx_images(const Dataset& data);
Bytes encode_idx_labels(const Dataset& data);
void write_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path);

// CIFAR binary: records of label byte(s) then 3072 channel-planar pixels.
// label_bytes is 1 (CIFAR-10) or 2 (CIFAR-100, coarse then fine; the fine
// label is used).
Dataset parse_cifar(std::span<const std::uint8_t> bytes, int label_bytes);
Dataset load_cifar_binary(const std::vector<std::string>& paths, int label_bytes);
Bytes encode_cifar(const Dataset& data, int label_bytes);

enum class SynthKind { Blobs, Rings };

struct SynthSpec {
  SynthKind kind = SynthKind::Blobs;
  int classes = 4;
  std::size_t n = 512;
  double noise = 0.1;
  std::uint64_t seed = 0;
  int image_size = 16;
  double contrast = 1.0;  // pattern amplitude around a 0.5 (1 - contrast) background
};

// Balanced single-channel images of class-specific patterns plus Gaussian
// pixel noise, clamped to [0, 1]. Sample i has class i % classes.
Dataset synth_dataset(const SynthSpec& spec);

// Random horizontal flip and random crop after zero padding, per sample.
void augment(Tensor<float>& batch, Rng& rng, bool flip, std::size_t pad);

// Binary PGM (C = 1) or PPM (C = 3) of sample `index`, 8-bit, round(255 v).
Bytes encode_netpbm(const Tensor<float>& images, std::size_t index);

}  // namespace advnet
