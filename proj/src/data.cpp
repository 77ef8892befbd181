#include "spikereg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace spikereg {

std::vector<DatasetRecord> load_cifar10_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open CIFAR-10 file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto length = static_cast<Index>(bytes.size());
  if (length == 0 || length % kRecordBytes != 0) {
    throw FormatError(path.string() + ": length " + std::to_string(length) + " bytes is not a positive multiple of " +
                      std::to_string(kRecordBytes) + "-byte records");
  }
  std::vector<DatasetRecord> records(static_cast<std::size_t>(length / kRecordBytes));
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto* src = reinterpret_cast<const std::uint8_t*>(bytes.data()) + r * kRecordBytes;
    if (src[0] > 9) {
      throw DataError(path.string() + ": corrupt record " + std::to_string(r) + " has label " + std::to_string(src[0]));
    }
    records[r].label = src[0];
    std::copy(src + 1, src + kRecordBytes, records[r].pixels.begin());
  }
  return records;
}

void write_cifar10_binary(const std::filesystem::path& path, std::span<const DatasetRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) {
    const auto label = static_cast<char>(r.label);
    out.write(&label, 1);
    out.write(reinterpret_cast<const char*>(r.pixels.data()), kImageBytes);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

DataSplits load_cifar10_splits(const std::filesystem::path& dir, std::size_t train_count, std::size_t test_count) {
  if (!std::filesystem::is_directory(dir)) throw IoError("data directory " + dir.string() + " does not exist");
  DataSplits splits;
  for (int batch = 1; batch <= 5 && splits.train.size() < train_count; ++batch) {
    auto records = load_cifar10_binary(dir / ("data_batch_" + std::to_string(batch) + ".bin"));
    const std::size_t take = std::min(records.size(), train_count - splits.train.size());
    splits.train.insert(splits.train.end(), records.begin(), records.begin() + static_cast<std::ptrdiff_t>(take));
  }
  auto test = load_cifar10_binary(dir / "test_batch.bin");
  test.resize(std::min(test.size(), test_count));
  splits.test = std::move(test);
  if (splits.train.size() < train_count || splits.test.size() < test_count) {
    throw DataError("requested " + std::to_string(train_count) + "/" + std::to_string(test_count) +
                    " train/test records but only " + std::to_string(splits.train.size()) + "/" +
                    std::to_string(splits.test.size()) + " are available in " + dir.string());
  }
  return splits;
}

DatasetRecord augment(const DatasetRecord& record, std::mt19937_64& rng) {
  constexpr Index pad = 4;
  std::uniform_int_distribution<int> offset(0, 2 * pad);
  std::bernoulli_distribution flip(0.5);
  const Index dy = offset(rng) - pad, dx = offset(rng) - pad;
  const bool mirrored = flip(rng);
  DatasetRecord out;
  out.label = record.label;
  const Index plane = kImageSide * kImageSide;
  for (Index c = 0; c < kImageChannels; ++c) {
    for (Index y = 0; y < kImageSide; ++y) {
      for (Index x = 0; x < kImageSide; ++x) {
        const Index sy = y + dy;
        const Index sx0 = x + dx;
        const Index sx = mirrored ? kImageSide - 1 - sx0 : sx0;
        std::uint8_t v = 0;
        if (sy >= 0 && sy < kImageSide && sx >= 0 && sx < kImageSide) {
          v = record.pixels[static_cast<std::size_t>(c * plane + sy * kImageSide + sx)];
        }
        out.pixels[static_cast<std::size_t>(c * plane + y * kImageSide + x)] = v;
      }
    }
  }
  return out;
}

std::vector<DatasetRecord> make_synthetic_records(std::size_t count, std::uint64_t seed, double noise) {
  // Class prototypes are fixed (independent of `seed`) so that train and test
  // sets generated with different seeds share the same classes.
  constexpr int kClasses = 10;
  constexpr Index kGrid = 4;
  std::mt19937_64 proto_rng(0x5eed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<std::array<double, kImageChannels * kGrid * kGrid>> prototypes(kClasses);
  for (auto& p : prototypes) {
    for (double& v : p) v = unit(proto_rng);
  }
  std::mt19937_64 rng(seed);
  std::vector<DatasetRecord> out(count);
  const Index cell = kImageSide / kGrid;
  for (std::size_t i = 0; i < count; ++i) {
    auto& r = out[i];
    r.label = static_cast<int>(i % kClasses);
    const auto& p = prototypes[static_cast<std::size_t>(r.label)];
    for (Index c = 0; c < kImageChannels; ++c) {
      for (Index y = 0; y < kImageSide; ++y) {
        for (Index x = 0; x < kImageSide; ++x) {
          const double base = p[static_cast<std::size_t>((c * kGrid + y / cell) * kGrid + x / cell)];
          const double v = 128.0 + 50.0 * base + 255.0 * noise * unit(rng);
          r.pixels[static_cast<std::size_t>((c * kImageSide + y) * kImageSide + x)] =
              static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
      }
    }
  }
  return out;
}

void write_synthetic_cifar10(const std::filesystem::path& dir, std::size_t train_count, std::size_t test_count,
                             std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const auto train = make_synthetic_records(train_count, seed);
  const std::size_t per_file = (train_count + 4) / 5;
  for (std::size_t b = 0; b < 5; ++b) {
    const std::size_t begin = std::min(train.size(), b * per_file);
    const std::size_t end = std::min(train.size(), begin + per_file);
    std::vector<DatasetRecord> chunk(train.begin() + static_cast<std::ptrdiff_t>(begin),
                                     train.begin() + static_cast<std::ptrdiff_t>(end));
    if (chunk.empty()) chunk.push_back(train.back());
    write_cifar10_binary(dir / ("data_batch_" + std::to_string(b + 1) + ".bin"), chunk);
  }
  write_cifar10_binary(dir / "test_batch.bin", make_synthetic_records(test_count, seed + 1));
}

}  // namespace spikereg
