// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

// Tensor-parallel decoding for one rank.
//
// Per decode step the engine first selects the next token from the current
// logits (gather or local top-k toward rank 0, then a broadcast from rank 0)
// and then pushes that token through every layer, growing the KV cache by
// one row and producing the logits for the following step. Synchronizations
// per step: n_layers + 2 with fused_sync, 2 * n_layers + 2 without.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shardlm/collectives.hpp"
#include "shardlm/model.hpp"
#include "shardlm/sampling.hpp"

namespace shardlm {

struct EngineFlags {
  /// Broadcast the 4-byte token id instead of its d_model embedding row.
  bool token_id_broadcast = true;
  /// Ranks send their local top-k candidates instead of full logit shards.
  bool local_topk = true;
  /// One allreduce per layer for the parallel-residual variant.
  bool fused_sync = true;
  /// Layer outputs are written into registered communication regions.
  bool zero_copy = true;

  /// fused_sync requires the parallel-residual variant.
  void validate(ResidualVariant variant) const;

  /// Every legal combination for `variant` (16 parallel, 8 sequential).
  static std::vector<EngineFlags> all_legal(ResidualVariant variant);

  std::string to_string() const;
  friend bool operator==(const EngineFlags&, const EngineFlags&) = default;
};

/// Keys and values for this rank's heads only: max_seq_len x d_model/W per layer.
struct KvCache {
  KvCache() = default;
  KvCache(const ModelConfig& config, std::size_t world_size);

  std::vector<Tensor> k;
  std::vector<Tensor> v;
  /// Positions committed to every layer.
  std::size_t length = 0;
};

struct StepReport {
  std::size_t step_index = 0;
  std::uint32_t token = 0;
  double latency_ms = 0.0;
  std::uint64_t sync_points_delta = 0;
  std::uint64_t wire_bytes_delta = 0;  // sent by this rank
  std::uint64_t wire_bytes_received_delta = 0;
  std::uint64_t copied_bytes_delta = 0;
  /// Bytes this rank moved (sent + received) in the token-selection collective.
  std::uint64_t selection_wire_bytes = 0;
  /// Bytes this rank moved (sent + received) in the token broadcast.
  std::uint64_t broadcast_wire_bytes = 0;
};

struct NextToken {
  std::uint32_t id = 0;
  Tensor embedding;  // 1 x d_model
  std::uint64_t selection_wire_bytes = 0;
  std::uint64_t broadcast_wire_bytes = 0;
};

/// Full logit shards are gathered to rank 0, which selects the token and
/// distributes it.
NextToken finish_step_baseline(Communicator& comm, const ShardedWeights& shard,
                               const Tensor& logits_shard, const GenParams& params,
                               SplitMix64& rng, const EngineFlags& flags);

/// Each rank sends only its local top-k (global indices) to rank 0, which
/// merges them, selects and distributes.
NextToken finish_step_local_topk(Communicator& comm, const ShardedWeights& shard,
                                 const Tensor& logits_shard, const GenParams& params,
                                 SplitMix64& rng, const EngineFlags& flags);

/// Rank 0's chosen token reaches every rank, either as a u32 id (each rank
/// looks up its replicated embedding) or as the embedding row itself.
NextToken distribute_token(Communicator& comm, const ShardedWeights& shard,
                           std::uint32_t root_token, const EngineFlags& flags);

struct GenerationResult {
  std::vector<std::uint32_t> tokens;
  std::vector<StepReport> steps;
  /// Counters and wall time of the prompt pass (excluded from steps).
  StepReport prefill;
  /// This rank's logits after the last decode step.
  Tensor final_logits_shard;
};

class Engine {
 public:
  /// `comm` and `shard` must outlive the engine.
  Engine(Communicator& comm, const ShardedWeights& shard, EngineFlags flags);

  /// One decoder layer for the next position; x is replicated on entry and
  /// on exit. Writes this position's keys/values at row cache().length.
  Tensor decoder_layer(const Tensor& x, std::size_t layer);

  /// Runs an embedding row through all layers and returns the logit shard.
  Tensor forward(const Tensor& embedding);

  /// Resets the cache and processes the prompt position by position.
  Tensor prefill(std::span<const std::uint32_t> prompt);

  GenerationResult generate(const GenParams& params);

  const KvCache& cache() const { return cache_; }
  const EngineFlags& flags() const { return flags_; }

 private:
  template <typename Produce>
  ConstMatrixMap<float> reduce(Produce&& produce, int slot);

  Communicator& comm_;
  const ShardedWeights& shard_;
  EngineFlags flags_;
  KvCache cache_;
  std::optional<RegisteredBuffer> regions_[2];
  Tensor partials_[2];
};

}  // namespace shardlm
