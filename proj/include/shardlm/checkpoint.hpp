// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

// MWT1 checkpoint format, little-endian, no padding:
//
//   "MWT1" | u32 tensor_count |
//   tensor_count x ( u16 name_len | name (UTF-8) | u8 ndim | ndim x u64 dim | f32 data... )

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "shardlm/model.hpp"

namespace shardlm {

struct NamedTensor {
  std::string name;
  Tensor value;
};

void save_checkpoint(const ModelWeights& w, const std::filesystem::path& path);

/// Reads every record in file order. Throws BadMagicError or
/// TruncatedCheckpointError (naming the tensor being read).
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// Reads a checkpoint and checks it tensor-by-tensor against `config`.
/// Throws CheckpointMismatchError when names or shapes disagree.
ModelWeights load_checkpoint(const std::filesystem::path& path, const ModelConfig& config);

}  // namespace shardlm
