#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "spikereg/tensor.hpp"

namespace spikereg {

inline constexpr Index kImageChannels = 3;
inline constexpr Index kImageSide = 32;
inline constexpr Index kImageBytes = kImageChannels * kImageSide * kImageSide;  // 3072
inline constexpr Index kRecordBytes = kImageBytes + 1;                          // 3073

/// One CIFAR-10 image: label in [0, 9] and three 1024-byte row-major planes (R, G, B).
struct DatasetRecord {
  int label = 0;
  std::array<std::uint8_t, kImageBytes> pixels{};
};

/// Per-channel standardization constants, applied as (x / 255 - mean) / std.
struct ChannelNormalization {
  std::array<double, 3> mean{0.4914, 0.4822, 0.4465};
  std::array<double, 3> std{0.2470, 0.2435, 0.2616};
};

/// Parses a CIFAR-10 binary batch file bit-exactly.
/// Throws FormatError when the length is not a multiple of 3073 bytes and
/// DataError (with the record index) on a label above 9.
std::vector<DatasetRecord> load_cifar10_binary(const std::filesystem::path& path);

void write_cifar10_binary(const std::filesystem::path& path, std::span<const DatasetRecord> records);

struct DataSplits {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> test;
};

/// Reads the first `train_count` records of data_batch_1..5.bin and the first
/// `test_count` of test_batch.bin. The two subsets come from different files,
/// so they are disjoint.
DataSplits load_cifar10_splits(const std::filesystem::path& dir, std::size_t train_count, std::size_t test_count);

/// Random crop from a 4-pixel zero-padded image plus a horizontal flip with
/// probability 1/2.
DatasetRecord augment(const DatasetRecord& record, std::mt19937_64& rng);

/// Class-conditioned noisy patterns in CIFAR layout, for tests and demos when
/// the real dataset is absent. Labels cycle 0..9 so classes are balanced.
std::vector<DatasetRecord> make_synthetic_records(std::size_t count, std::uint64_t seed, double noise = 0.35);

/// Writes the five train batch files and the test batch file of a synthetic
/// dataset into `dir`.
void write_synthetic_cifar10(const std::filesystem::path& dir, std::size_t train_count, std::size_t test_count,
                             std::uint64_t seed);

template <typename Scalar>
void standardize_into(const DatasetRecord& record, const ChannelNormalization& norm, Scalar* out) {
  const Index plane = kImageSide * kImageSide;
  for (Index c = 0; c < kImageChannels; ++c) {
    const double m = norm.mean[static_cast<std::size_t>(c)];
    const double s = norm.std[static_cast<std::size_t>(c)];
    for (Index i = 0; i < plane; ++i) {
      out[c * plane + i] = static_cast<Scalar>((record.pixels[static_cast<std::size_t>(c * plane + i)] / 255.0 - m) / s);
    }
  }
}

/// Direct (constant-current) coding: the image repeated at each of N steps,
/// image [C, H, W] -> [N, C, H, W].
template <typename Scalar>
Tensor<Scalar> encode_constant_current(const Tensor<Scalar>& image, Index time_steps) {
  if (time_steps < 1) throw UsageError("encode_constant_current: need at least one time step");
  Shape shape{time_steps};
  shape.insert(shape.end(), image.shape().begin(), image.shape().end());
  Buffer<Scalar> out(image.numel() * time_steps);
  for (Index t = 0; t < time_steps; ++t) out.segment(t * image.numel(), image.numel()) = image.values();
  return Tensor<Scalar>(std::move(shape), std::move(out));
}

/// Minibatch input [N, B, 3, 32, 32] with every step carrying the same
/// standardized images.
template <typename Scalar>
Tensor<Scalar> encode_batch(std::span<const DatasetRecord* const> records, Index time_steps,
                            const ChannelNormalization& norm) {
  if (time_steps < 1) throw UsageError("encode_batch: need at least one time step");
  const Index batch = static_cast<Index>(records.size());
  const Index step = batch * kImageBytes;
  Buffer<Scalar> out(time_steps * step);
  for (Index b = 0; b < batch; ++b) standardize_into(*records[static_cast<std::size_t>(b)], norm, out.data() + b * kImageBytes);
  for (Index t = 1; t < time_steps; ++t) out.segment(t * step, step) = out.head(step);
  return Tensor<Scalar>({time_steps, batch, kImageChannels, kImageSide, kImageSide}, std::move(out));
}

}  // namespace spikereg
