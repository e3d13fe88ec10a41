// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "shardlm/engine.hpp"

#include <chrono>
#include <cstring>

namespace shardlm {

namespace {

constexpr int kRoot = 0;
constexpr int kAttnSlot = 0;
constexpr int kFfnSlot = 1;

using Clock = std::chrono::steady_clock;

std::uint64_t moved_bytes(const CommStats& before, const CommStats& after) {
  const CommStats d = after - before;
  return d.wire_bytes_sent + d.wire_bytes_received;
}

StepReport make_report(std::size_t index, const CommStats& before, const CommStats& after,
                       Clock::time_point t0, Clock::time_point t1) {
  const CommStats d = after - before;
  StepReport r;
  r.step_index = index;
  r.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  r.sync_points_delta = d.sync_points;
  r.wire_bytes_delta = d.wire_bytes_sent;
  r.wire_bytes_received_delta = d.wire_bytes_received;
  r.copied_bytes_delta = d.copied_bytes;
  return r;
}

std::uint32_t lookup_row(const Tensor& embedding, const Tensor& row) {
  const auto bytes = static_cast<std::size_t>(row.size()) * sizeof(float);
  for (Eigen::Index t = 0; t < embedding.rows(); ++t) {
    if (std::memcmp(embedding.row(t).data(), row.data(), bytes) == 0) {
      return static_cast<std::uint32_t>(t);
    }
  }
  throw ProtocolError("broadcast embedding row matches no vocabulary entry");
}

}  // namespace

void EngineFlags::validate(ResidualVariant variant) const {
  if (fused_sync && variant != ResidualVariant::Parallel) {
    throw ConfigError("fused_sync requires the parallel residual variant");
  }
}

std::vector<EngineFlags> EngineFlags::all_legal(ResidualVariant variant) {
  std::vector<EngineFlags> out;
  for (int bits = 0; bits < 16; ++bits) {
    EngineFlags f{(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0, (bits & 8) != 0};
    if (f.fused_sync && variant != ResidualVariant::Parallel) continue;
    out.push_back(f);
  }
  return out;
}

std::string EngineFlags::to_string() const {
  auto onoff = [](bool b) { return b ? "on" : "off"; };
  return std::string("token_id_broadcast=") + onoff(token_id_broadcast) +
         " local_topk=" + onoff(local_topk) + " fused_sync=" + onoff(fused_sync) +
         " zero_copy=" + onoff(zero_copy);
}

KvCache::KvCache(const ModelConfig& config, std::size_t world_size) {
  const auto rows = static_cast<Eigen::Index>(config.max_seq_len);
  const auto cols = static_cast<Eigen::Index>(config.d_model / world_size);
  k.assign(config.n_layers, Tensor::Zero(rows, cols));
  v.assign(config.n_layers, Tensor::Zero(rows, cols));
}

NextToken distribute_token(Communicator& comm, const ShardedWeights& shard,
                           std::uint32_t root_token, const EngineFlags& flags) {
  const CommStats before = comm.stats();
  NextToken next;
  if (flags.token_id_broadcast) {
    std::uint32_t id = root_token;
    comm.broadcast(std::span<std::uint32_t>(&id, 1), kRoot);
    if (id >= shard.config.vocab_size) {
      throw ProtocolError("broadcast token id " + std::to_string(id) + " outside vocabulary");
    }
    next.id = id;
    next.embedding = shard.embedding.row(id);
  } else {
    Tensor row(1, static_cast<Eigen::Index>(shard.config.d_model));
    if (comm.rank() == kRoot) row = shard.embedding.row(root_token);
    comm.broadcast(std::span<float>(row.data(), static_cast<std::size_t>(row.size())), kRoot);
    // Non-root ranks skip the lookup; the id is recovered only for bookkeeping.
    next.id = comm.rank() == kRoot ? root_token : lookup_row(shard.embedding, row);
    next.embedding = std::move(row);
  }
  next.broadcast_wire_bytes = moved_bytes(before, comm.stats());
  return next;
}

NextToken finish_step_baseline(Communicator& comm, const ShardedWeights& shard,
                               const Tensor& logits_shard, const GenParams& params,
                               SplitMix64& rng, const EngineFlags& flags) {
  const CommStats before = comm.stats();
  const std::vector<float> logits = comm.gather(row_span(logits_shard), kRoot);
  const std::uint64_t selection = moved_bytes(before, comm.stats());

  std::uint32_t token = 0;
  if (comm.rank() == kRoot) token = select_token(std::span<const float>(logits), params, rng);
  NextToken next = distribute_token(comm, shard, token, flags);
  next.selection_wire_bytes = selection;
  return next;
}

NextToken finish_step_local_topk(Communicator& comm, const ShardedWeights& shard,
                                 const Tensor& logits_shard, const GenParams& params,
                                 SplitMix64& rng, const EngineFlags& flags) {
  const std::size_t k = params.effective_k();
  // A shard narrower than k contributes all of its entries.
  const std::size_t local_k = std::min(k, static_cast<std::size_t>(logits_shard.size()));
  const std::vector<Candidate> local =
      topk(row_span(logits_shard), local_k, static_cast<std::uint32_t>(shard.vocab_offset));

  const CommStats before = comm.stats();
  std::vector<Candidate> gathered = comm.reduce_topk_gather(local, kRoot);
  const std::uint64_t selection = moved_bytes(before, comm.stats());

  std::uint32_t token = 0;
  if (comm.rank() == kRoot) {
    const std::vector<Candidate> merged = merge_candidates(std::move(gathered), k);
    token = select_token(std::span<const Candidate>(merged), params, rng);
  }
  NextToken next = distribute_token(comm, shard, token, flags);
  next.selection_wire_bytes = selection;
  return next;
}

Engine::Engine(Communicator& comm, const ShardedWeights& shard, EngineFlags flags)
    : comm_(comm), shard_(shard), flags_(flags), cache_(shard.config, shard.world_size) {
  flags_.validate(shard.config.variant);
  if (static_cast<std::size_t>(comm.world_size()) != shard.world_size ||
      static_cast<std::size_t>(comm.rank()) != shard.rank) {
    throw ConfigError("shard for rank " + std::to_string(shard.rank) + "/" +
                      std::to_string(shard.world_size) + " driven by communicator rank " +
                      std::to_string(comm.rank()) + "/" + std::to_string(comm.world_size()));
  }
  const auto d = static_cast<Eigen::Index>(shard.config.d_model);
  for (int slot = 0; slot < 2; ++slot) {
    if (flags_.zero_copy) {
      regions_[slot] = comm_.register_buffer(static_cast<std::size_t>(d) * sizeof(float));
    } else {
      partials_[slot] = Tensor::Zero(1, d);
    }
  }
}

// The row-parallel partial for this rank is produced into the reduction
// buffer for `slot` and summed across ranks. With zero_copy the buffer is a
// registered region and the kernel's final write lands in it directly.
template <typename Produce>
ConstMatrixMap<float> Engine::reduce(Produce&& produce, int slot) {
  const auto d = static_cast<Eigen::Index>(shard_.config.d_model);
  if (flags_.zero_copy) {
    std::span<float> region = comm_.region(*regions_[slot]);
    produce(MatrixMap<float>(region.data(), 1, d));
    comm_.all_reduce_sum_registered(*regions_[slot]);
    return ConstMatrixMap<float>(region.data(), 1, d);
  }
  Tensor& partial = partials_[slot];
  produce(MatrixMap<float>(partial.data(), 1, d));
  comm_.all_reduce_sum(std::span<float>(partial.data(), static_cast<std::size_t>(d)));
  return ConstMatrixMap<float>(partial.data(), 1, d);
}

Tensor Engine::decoder_layer(const Tensor& x, std::size_t layer) {
  const ModelConfig& c = shard_.config;
  const LayerShard& w = shard_.layers.at(layer);
  if (cache_.length >= c.max_seq_len) {
    throw ArgumentError("sequence overflow: max_seq_len=" + std::to_string(c.max_seq_len));
  }
  const auto pos = static_cast<Eigen::Index>(cache_.length);
  const auto heads = static_cast<Eigen::Index>(shard_.local_heads());

  auto attention_partial_input = [&](const Tensor& normed) {
    cache_.k[layer].row(pos) = matmul(normed, w.w_k);
    cache_.v[layer].row(pos) = matmul(normed, w.w_v);
    const Tensor q = matmul(normed, w.w_q);
    return attention(q, cache_.k[layer].topRows(pos + 1), cache_.v[layer].topRows(pos + 1),
                     heads);
  };
  auto ffn_hidden = [&](const Tensor& normed) { return gelu(matmul(normed, w.w_up)); };

  const Tensor h = rms_norm(x, w.ln_attn_gain, c.norm_eps);

  if (c.variant == ResidualVariant::Sequential) {
    const Tensor heads_out = attention_partial_input(h);
    const Tensor x_attn =
        x + reduce([&](auto out) { matmul_into(heads_out, w.w_o, out); }, kAttnSlot);
    const Tensor hidden = ffn_hidden(rms_norm(x_attn, w.ln_ffn_gain, c.norm_eps));
    return x_attn + reduce([&](auto out) { matmul_into(hidden, w.w_down, out); }, kFfnSlot);
  }

  const Tensor heads_out = attention_partial_input(h);
  const Tensor hidden = ffn_hidden(h);
  if (flags_.fused_sync) {
    // x is replicated, so it joins only after the reduction.
    const Tensor attn_partial = matmul(heads_out, w.w_o);
    const Tensor ffn_partial = matmul(hidden, w.w_down);
    return x + reduce([&](auto out) { out = attn_partial + ffn_partial; }, kAttnSlot);
  }
  const auto attn = reduce([&](auto out) { matmul_into(heads_out, w.w_o, out); }, kAttnSlot);
  const auto ffn = reduce([&](auto out) { matmul_into(hidden, w.w_down, out); }, kFfnSlot);
  return x + (attn + ffn);
}

Tensor Engine::forward(const Tensor& embedding) {
  Tensor x = embedding;
  for (std::size_t l = 0; l < shard_.config.n_layers; ++l) x = decoder_layer(x, l);
  if (cache_.length >= shard_.config.max_seq_len) {
    throw ArgumentError("sequence overflow: max_seq_len=" +
                        std::to_string(shard_.config.max_seq_len));
  }
  ++cache_.length;
  return matmul(rms_norm(x, shard_.final_ln_gain, shard_.config.norm_eps), shard_.lm_head);
}

Tensor Engine::prefill(std::span<const std::uint32_t> prompt) {
  if (prompt.empty()) throw ArgumentError("prefill: empty prompt");
  if (prompt.size() > shard_.config.max_seq_len) {
    throw ArgumentError("sequence overflow: prompt of " + std::to_string(prompt.size()) +
                        " exceeds max_seq_len=" + std::to_string(shard_.config.max_seq_len));
  }
  cache_.length = 0;
  Tensor logits;
  for (std::uint32_t token : prompt) {
    if (token >= shard_.config.vocab_size) {
      throw ArgumentError("token " + std::to_string(token) + " outside vocabulary");
    }
    logits = forward(shard_.embedding.row(token));
  }
  return logits;
}

GenerationResult Engine::generate(const GenParams& params) {
  params.validate(shard_.config);
  GenerationResult result;

  CommStats before = comm_.stats();
  auto t0 = Clock::now();
  Tensor logits = prefill(params.prompt_tokens);
  result.prefill = make_report(0, before, comm_.stats(), t0, Clock::now());

  SplitMix64 rng(params.seed);
  for (std::size_t step = 0; step < params.gen_len; ++step) {
    before = comm_.stats();
    t0 = Clock::now();
    NextToken next = flags_.local_topk
                         ? finish_step_local_topk(comm_, shard_, logits, params, rng, flags_)
                         : finish_step_baseline(comm_, shard_, logits, params, rng, flags_);
    result.tokens.push_back(next.id);
    logits = forward(next.embedding);
    StepReport report = make_report(step, before, comm_.stats(), t0, Clock::now());
    report.token = next.id;
    report.selection_wire_bytes = next.selection_wire_bytes;
    report.broadcast_wire_bytes = next.broadcast_wire_bytes;
    result.steps.push_back(report);
  }
  result.final_logits_shard = std::move(logits);
  return result;
}

}  // namespace shardlm
