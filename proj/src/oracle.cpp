// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "shardlm/oracle.hpp"

namespace shardlm {

OracleSession::OracleSession(const ModelWeights& weights) : w_(weights) {
  const ModelConfig& c = w_.config;
  k_cache_.assign(c.n_layers, Tensor::Zero(static_cast<Eigen::Index>(c.max_seq_len),
                                           static_cast<Eigen::Index>(c.d_model)));
  v_cache_ = k_cache_;
}

Tensor OracleSession::layer(const Tensor& x, std::size_t l) {
  const ModelConfig& c = w_.config;
  const LayerWeights& lw = w_.layers[l];
  const auto pos = static_cast<Eigen::Index>(length_);

  const Tensor h = rms_norm(x, lw.ln_attn_gain, c.norm_eps);
  k_cache_[l].row(pos) = matmul(h, lw.w_k);
  v_cache_[l].row(pos) = matmul(h, lw.w_v);
  const Tensor q = matmul(h, lw.w_q);
  const Tensor heads = attention(q, k_cache_[l].topRows(pos + 1), v_cache_[l].topRows(pos + 1),
                                 static_cast<Eigen::Index>(c.n_heads));
  const Tensor attn = matmul(heads, lw.w_o);

  if (c.variant == ResidualVariant::Sequential) {
    const Tensor x_attn = x + attn;
    const Tensor h2 = rms_norm(x_attn, lw.ln_ffn_gain, c.norm_eps);
    return x_attn + matmul(gelu(matmul(h2, lw.w_up)), lw.w_down);
  }
  const Tensor ffn = matmul(gelu(matmul(h, lw.w_up)), lw.w_down);
  return x + (attn + ffn);
}

Tensor OracleSession::step(std::uint32_t token) {
  const ModelConfig& c = w_.config;
  if (token >= c.vocab_size) {
    throw ArgumentError("token " + std::to_string(token) + " outside vocabulary of " +
                        std::to_string(c.vocab_size));
  }
  if (length_ >= c.max_seq_len) {
    throw ArgumentError("sequence overflow: max_seq_len=" + std::to_string(c.max_seq_len));
  }
  Tensor x = w_.embedding.row(token);
  for (std::size_t l = 0; l < c.n_layers; ++l) x = layer(x, l);
  ++length_;
  return matmul(rms_norm(x, w_.final_ln_gain, c.norm_eps), w_.lm_head);
}

Tensor oracle_forward(const ModelWeights& weights, std::span<const std::uint32_t> tokens) {
  if (tokens.empty()) throw ArgumentError("oracle_forward: empty token list");
  OracleSession session(weights);
  Tensor logits;
  for (std::uint32_t t : tokens) logits = session.step(t);
  return logits;
}

std::vector<std::uint32_t> oracle_generate(const ModelWeights& weights, const GenParams& params) {
  params.validate(weights.config);
  OracleSession session(weights);
  Tensor logits;
  for (std::uint32_t t : params.prompt_tokens) logits = session.step(t);

  SplitMix64 rng(params.seed);
  std::vector<std::uint32_t> tokens;
  for (std::size_t i = 0; i < params.gen_len; ++i) {
    const std::uint32_t next = select_token(row_span(logits), params, rng);
    tokens.push_back(next);
    logits = session.step(next);
  }
  return tokens;
}

}  // namespace shardlm
