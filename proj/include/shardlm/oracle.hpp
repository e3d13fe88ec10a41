// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

// Single-process forward pass over full weights. It shares the tensor
// kernels with the engine but involves no sharding or communication, so a
// one-rank engine must match it bit for bit.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "shardlm/model.hpp"
#include "shardlm/sampling.hpp"

namespace shardlm {

/// Incremental full-width forward pass with its own KV cache.
class OracleSession {
 public:
  /// `weights` must outlive the session.
  explicit OracleSession(const ModelWeights& weights);

  /// Appends one position and returns its full logits (1 x vocab).
  Tensor step(std::uint32_t token);

  std::size_t length() const { return length_; }

 private:
  Tensor layer(const Tensor& x, std::size_t l);

  const ModelWeights& w_;
  std::vector<Tensor> k_cache_;
  std::vector<Tensor> v_cache_;
  std::size_t length_ = 0;
};

/// Logits for the last position of `tokens`.
Tensor oracle_forward(const ModelWeights& weights, std::span<const std::uint32_t> tokens);

/// Generated tokens under the same selection and RNG contract as the engine.
std::vector<std::uint32_t> oracle_generate(const ModelWeights& weights, const GenParams& params);

}  // namespace shardlm
