// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lpf/adam.hpp"
#include "lpf/model.hpp"
#include "lpf/trainer.hpp"

namespace lpf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Full training snapshot: configuration, every parameter tensor, optimizer
/// moments, and the dropout generator states (carried inside `model`).
struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  LpfModel model;
  AdamState optimizer;
  std::uint64_t epoch = 0;  // completed epochs
};

// LPFC layout (little-endian):
//   "LPFC" | u32 version | u32 section count
//   per section: 4-byte tag | u64 payload length | payload
//     CONF  model + train configuration, epoch
//     PARM  named parameter tensors (f64)
//     OPTM  Adam step counter, hyper-parameters, named moment buffers
//     RNGS  named dropout generator states
//   u64 FNV-1a checksum of every preceding byte

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError (bad magic / malformed), VersionError, TruncatedError,
/// or ChecksumError.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lpf
