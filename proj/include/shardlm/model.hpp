// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shardlm/tensor.hpp"

namespace shardlm {

enum class ResidualVariant {
  /// h = x + (Attn(LN(x)) + FFN(LN(x))), one shared pre-norm (GPT-J / Falcon).
  Parallel,
  /// h = x + Attn(LN1(x)); out = h + FFN(LN2(h)).
  Sequential,
};

std::string to_string(ResidualVariant v);
ResidualVariant parse_variant(const std::string& s);

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t d_model = 256;
  std::size_t n_heads = 8;
  std::size_t d_ff = 1024;
  std::size_t vocab_size = 1024;
  std::size_t max_seq_len = 640;
  ResidualVariant variant = ResidualVariant::Parallel;
  float norm_eps = 1e-5f;

  std::size_t d_head() const { return d_model / n_heads; }

  /// Throws ConfigError on an inconsistent architecture.
  void validate() const;
  /// Throws ConfigError naming the dimension that world_size does not divide.
  void validate_world_size(std::size_t world_size) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerWeights {
  /// Attention pre-norm; the single shared pre-norm for the parallel variant.
  Tensor ln_attn_gain;
  /// FFN pre-norm; empty for the parallel variant.
  Tensor ln_ffn_gain;
  Tensor w_q, w_k, w_v, w_o;
  Tensor w_up, w_down;
};

struct ModelWeights {
  ModelConfig config;
  Tensor embedding;  // vocab x d_model
  std::vector<LayerWeights> layers;
  Tensor final_ln_gain;
  Tensor lm_head;  // d_model x vocab, not tied to the embedding
};

struct LayerShard {
  Tensor ln_attn_gain;
  Tensor ln_ffn_gain;
  Tensor w_q, w_k, w_v;  // d_model x d_model/W, whole heads
  Tensor w_o;            // d_model/W x d_model
  Tensor w_up;           // d_model x d_ff/W
  Tensor w_down;         // d_ff/W x d_model
};

/// One rank's slice of the model. Embedding and norm gains are replicated;
/// the LM head is split over the vocabulary.
struct ShardedWeights {
  ModelConfig config;
  std::size_t rank = 0;
  std::size_t world_size = 1;
  std::size_t vocab_offset = 0;
  Tensor embedding;
  std::vector<LayerShard> layers;
  Tensor final_ln_gain;
  Tensor lm_head;  // d_model x vocab/W

  std::size_t local_heads() const { return config.n_heads / world_size; }
  std::size_t local_vocab() const { return config.vocab_size / world_size; }
};

/// Visits every tensor in canonical order with its canonical name
/// ("embedding", "layers.3.w_up", ...). This is also the fill order of
/// generate_weights and the record order of checkpoints.
void for_each_tensor(const ModelWeights& w,
                     const std::function<void(const std::string&, const Tensor&)>& fn);
void for_each_tensor(ModelWeights& w, const std::function<void(const std::string&, Tensor&)>& fn);

/// Weights with every tensor allocated at its configured shape (zero-filled,
/// gains set to one).
ModelWeights allocate_weights(const ModelConfig& config);

ModelWeights generate_weights(const ModelConfig& config, std::uint64_t seed);

ShardedWeights shard_weights(const ModelWeights& w, std::size_t rank, std::size_t world_size);

/// Inverse of shard_weights over a full rank-ordered set of shards.
ModelWeights unshard_weights(std::span<const ShardedWeights> shards);

bool is_norm_gain(const std::string& tensor_name);

}  // namespace shardlm
