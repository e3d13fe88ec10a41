// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "shardlm/sampling.hpp"

#include <algorithm>

namespace shardlm {

std::string to_string(DecodeMode mode) { return mode == DecodeMode::Greedy ? "greedy" : "topk"; }

DecodeMode parse_decode_mode(const std::string& s) {
  if (s == "greedy") return DecodeMode::Greedy;
  if (s == "topk") return DecodeMode::TopK;
  throw ConfigError("unknown mode '" + s + "' (expected greedy|topk)");
}

void GenParams::validate(const ModelConfig& config) const {
  if (prompt_tokens.empty()) throw ConfigError("prompt must contain at least one token");
  for (std::uint32_t t : prompt_tokens) {
    if (t >= config.vocab_size) {
      throw ConfigError("prompt token " + std::to_string(t) + " outside vocabulary of " +
                        std::to_string(config.vocab_size));
    }
  }
  if (prompt_tokens.size() + gen_len > config.max_seq_len) {
    throw ConfigError("prompt_len + gen_len = " + std::to_string(prompt_tokens.size() + gen_len) +
                      " exceeds max_seq_len=" + std::to_string(config.max_seq_len));
  }
  if (mode == DecodeMode::TopK) {
    if (!(temperature > 0.0f)) throw ConfigError("temperature must be positive");
    if (top_k < 1 || top_k > config.vocab_size) {
      throw ConfigError("top-k k=" + std::to_string(top_k) + " outside [1, vocab_size]");
    }
  }
}

std::vector<Candidate> merge_candidates(std::vector<Candidate> candidates, std::size_t k) {
  std::sort(candidates.begin(), candidates.end(), ranks_before);
  if (candidates.size() > k) candidates.resize(k);
  return candidates;
}

std::uint32_t select_token(std::span<const Candidate> ranked, const GenParams& params,
                           SplitMix64& rng) {
  if (ranked.empty()) throw ArgumentError("select_token: no candidates");
  if (params.mode == DecodeMode::Greedy) return ranked.front().index;

  const std::size_t k = std::min(params.top_k, ranked.size());
  Tensor scaled(1, static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    scaled(0, static_cast<Eigen::Index>(i)) = ranked[i].value / params.temperature;
  }
  const Tensor probs = softmax_rows(scaled);
  const float u = rng.next_unit();
  float cumulative = 0.0f;
  for (std::size_t i = 0; i < k; ++i) {
    cumulative += probs(0, static_cast<Eigen::Index>(i));
    if (u < cumulative) return ranked[i].index;
  }
  return ranked[k - 1].index;
}

std::uint32_t select_token(std::span<const float> logits, const GenParams& params,
                           SplitMix64& rng) {
  if (params.mode == DecodeMode::Greedy) return argmax(logits);
  const std::vector<Candidate> ranked = topk(logits, std::min(params.top_k, logits.size()));
  return select_token(ranked, params, rng);
}

std::vector<std::uint32_t> random_prompt(std::size_t length, std::size_t vocab_size,
                                         std::uint64_t prompt_seed) {
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
  SplitMix64 rng(prompt_seed);
  std::vector<std::uint32_t> prompt(length);
  for (auto& t : prompt) t = static_cast<std::uint32_t>(rng.next() % vocab_size);
  return prompt;
}

}  // namespace shardlm
