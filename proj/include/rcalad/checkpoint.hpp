#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rcalad/training.hpp"

namespace rcalad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::uint64_t global_step = 0;
  std::uint64_t epoch = 0;
  std::vector<std::string> blocks;  // names in file order
};

/// Binary layout, little-endian:
///   "RCAL" | u32 version | u64 config_hash | u64 seed | u64 global_step |
///   u64 epoch | u64 block count | blocks | u64 FNV-1a of all prior bytes
/// where a block is u32 name length, name, u32 rank, u64 dims, f64 values.
/// Blocks hold every bundle state tensor plus both Adam states. A JSON
/// sidecar (<path>.json) repeats the header for inspection.
void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer,
                     std::uint64_t config_hash);

/// Header and block names without touching any model.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Restores parameters, batch-norm and spectral states, optimizer moments
/// and progress counters. The whole file is validated (magic, version,
/// checksum, config hash, every expected block with matching shape) before
/// anything is modified.
CheckpointInfo load_checkpoint(const std::filesystem::path& path, Trainer& trainer,
                               std::uint64_t expected_config_hash);

} // namespace rcalad
