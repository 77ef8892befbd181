#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spikereg/tensor.hpp"

namespace spikereg {

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Run-end snapshot: parameters, running statistics and optimizer state.
///
/// Layout (all integers and floats little-endian):
///   8 bytes   magic "SPKRCKPT"
///   u32       format version (1)
///   u64       epoch
///   u64 + n   config text (length, then bytes)
///   u64       tensor count
///   per tensor: u32 name length, name bytes, u32 rank, rank x i64 extents,
///               product(extents) x f64 values
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t epoch = 0;
  std::string config_text;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor& find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace spikereg
