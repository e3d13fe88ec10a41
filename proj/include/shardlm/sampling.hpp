// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shardlm/model.hpp"
#include "shardlm/splitmix.hpp"
#include "shardlm/tensor.hpp"

namespace shardlm {

enum class DecodeMode { Greedy, TopK };

std::string to_string(DecodeMode mode);
DecodeMode parse_decode_mode(const std::string& s);

/// Batch size is fixed at one: a single prompt.
struct GenParams {
  std::vector<std::uint32_t> prompt_tokens;
  std::size_t gen_len = 0;
  DecodeMode mode = DecodeMode::Greedy;
  std::size_t top_k = 1;
  float temperature = 1.0f;
  std::uint64_t seed = 0;

  /// Candidates kept per selection: 1 for greedy, top_k otherwise.
  std::size_t effective_k() const { return mode == DecodeMode::Greedy ? 1 : top_k; }

  /// Throws ConfigError on an empty/out-of-vocab prompt, a sequence that
  /// would exceed max_seq_len, or bad top-k parameters.
  void validate(const ModelConfig& config) const;
};

/// Sorts by (value desc, index asc) and keeps the first k.
std::vector<Candidate> merge_candidates(std::vector<Candidate> candidates, std::size_t k);

/// Picks a token from candidates already ordered by ranks_before.
///
/// Greedy takes the first. TopK divides the first k values by the
/// temperature, applies softmax and walks the cumulative distribution with
/// one uniform draw from `rng` (exactly one draw per call).
std::uint32_t select_token(std::span<const Candidate> ranked, const GenParams& params,
                           SplitMix64& rng);

/// Same selection over a full logit vector.
std::uint32_t select_token(std::span<const float> logits, const GenParams& params,
                           SplitMix64& rng);

/// Seeded random prompt: token i = splitmix64(prompt_seed).next() % vocab.
std::vector<std::uint32_t> random_prompt(std::size_t length, std::size_t vocab_size,
                                         std::uint64_t prompt_seed);

}  // namespace shardlm
