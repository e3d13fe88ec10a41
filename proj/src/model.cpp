// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "shardlm/model.hpp"

#include "shardlm/splitmix.hpp"

namespace shardlm {

std::string to_string(ResidualVariant v) {
  return v == ResidualVariant::Parallel ? "parallel" : "sequential";
}

ResidualVariant parse_variant(const std::string& s) {
  if (s == "parallel") return ResidualVariant::Parallel;
  if (s == "sequential") return ResidualVariant::Sequential;
  throw ConfigError("unknown variant '" + s + "' (expected parallel|sequential)");
}

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_ff == 0 || vocab_size == 0 || max_seq_len == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model=" + std::to_string(d_model) + " is not divisible by n_heads=" +
                      std::to_string(n_heads));
  }
  if (!(norm_eps > 0.0f)) throw ConfigError("norm_eps must be positive");
}

void ModelConfig::validate_world_size(std::size_t world_size) const {
  if (world_size == 0) throw ConfigError("world_size must be at least 1");
  auto check = [&](const char* name, std::size_t dim) {
    if (dim % world_size != 0) {
      throw ConfigError(std::string(name) + "=" + std::to_string(dim) +
                        " is not divisible by world_size=" + std::to_string(world_size));
    }
  };
  check("n_heads", n_heads);
  check("d_ff", d_ff);
  check("vocab_size", vocab_size);
}

bool is_norm_gain(const std::string& tensor_name) {
  return tensor_name.ends_with("_gain");
}

namespace {

template <typename W, typename Fn>
void visit(W& w, Fn&& fn) {
  fn(std::string("embedding"), w.embedding);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto& layer = w.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    if (w.config.variant == ResidualVariant::Parallel) {
      fn(p + "ln_gain", layer.ln_attn_gain);
    } else {
      fn(p + "ln_attn_gain", layer.ln_attn_gain);
      fn(p + "ln_ffn_gain", layer.ln_ffn_gain);
    }
    fn(p + "w_q", layer.w_q);
    fn(p + "w_k", layer.w_k);
    fn(p + "w_v", layer.w_v);
    fn(p + "w_o", layer.w_o);
    fn(p + "w_up", layer.w_up);
    fn(p + "w_down", layer.w_down);
  }
  fn(std::string("final_ln_gain"), w.final_ln_gain);
  fn(std::string("lm_head"), w.lm_head);
}

// Column block [begin, begin + count).
Tensor columns(const Tensor& t, std::size_t begin, std::size_t count) {
  return t.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
}

Tensor rows(const Tensor& t, std::size_t begin, std::size_t count) {
  return t.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
}

}  // namespace

void for_each_tensor(const ModelWeights& w,
                     const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit(w, fn);
}

void for_each_tensor(ModelWeights& w, const std::function<void(const std::string&, Tensor&)>& fn) {
  visit(w, fn);
}

ModelWeights allocate_weights(const ModelConfig& config) {
  config.validate();
  const auto d = static_cast<Eigen::Index>(config.d_model);
  const auto ff = static_cast<Eigen::Index>(config.d_ff);
  const auto vocab = static_cast<Eigen::Index>(config.vocab_size);

  ModelWeights w;
  w.config = config;
  w.embedding = Tensor::Zero(vocab, d);
  w.layers.resize(config.n_layers);
  for (auto& layer : w.layers) {
    layer.ln_attn_gain = Tensor::Ones(1, d);
    if (config.variant == ResidualVariant::Sequential) layer.ln_ffn_gain = Tensor::Ones(1, d);
    layer.w_q = Tensor::Zero(d, d);
    layer.w_k = Tensor::Zero(d, d);
    layer.w_v = Tensor::Zero(d, d);
    layer.w_o = Tensor::Zero(d, d);
    layer.w_up = Tensor::Zero(d, ff);
    layer.w_down = Tensor::Zero(ff, d);
  }
  w.final_ln_gain = Tensor::Ones(1, d);
  w.lm_head = Tensor::Zero(d, vocab);
  return w;
}

ModelWeights generate_weights(const ModelConfig& config, std::uint64_t seed) {
  ModelWeights w = allocate_weights(config);
  SplitMix64 rng(seed);
  for_each_tensor(w, [&](const std::string& name, Tensor& t) {
    if (is_norm_gain(name)) return;  // stays 1.0, draws nothing
    float* data = t.data();
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double unit = static_cast<double>(rng.next() >> 40) / 16777216.0;
      data[i] = static_cast<float>((unit * 2.0 - 1.0) * 0.1);
    }
  });
  return w;
}

ShardedWeights shard_weights(const ModelWeights& w, std::size_t rank, std::size_t world_size) {
  const ModelConfig& c = w.config;
  c.validate_world_size(world_size);
  if (rank >= world_size) {
    throw ArgumentError("rank " + std::to_string(rank) + " outside world of size " +
                        std::to_string(world_size));
  }
  const std::size_t attn_cols = c.d_model / world_size;  // whole heads: n_heads % W == 0
  const std::size_t ff_cols = c.d_ff / world_size;
  const std::size_t vocab_cols = c.vocab_size / world_size;

  ShardedWeights s;
  s.config = c;
  s.rank = rank;
  s.world_size = world_size;
  s.vocab_offset = rank * vocab_cols;
  s.embedding = w.embedding;
  s.final_ln_gain = w.final_ln_gain;
  s.lm_head = columns(w.lm_head, s.vocab_offset, vocab_cols);
  s.layers.reserve(w.layers.size());
  for (const auto& layer : w.layers) {
    LayerShard ls;
    ls.ln_attn_gain = layer.ln_attn_gain;
    ls.ln_ffn_gain = layer.ln_ffn_gain;
    ls.w_q = columns(layer.w_q, rank * attn_cols, attn_cols);
    ls.w_k = columns(layer.w_k, rank * attn_cols, attn_cols);
    ls.w_v = columns(layer.w_v, rank * attn_cols, attn_cols);
    ls.w_o = rows(layer.w_o, rank * attn_cols, attn_cols);
    ls.w_up = columns(layer.w_up, rank * ff_cols, ff_cols);
    ls.w_down = rows(layer.w_down, rank * ff_cols, ff_cols);
    s.layers.push_back(std::move(ls));
  }
  return s;
}

ModelWeights unshard_weights(std::span<const ShardedWeights> shards) {
  if (shards.empty()) throw ArgumentError("unshard_weights: no shards");
  const ModelConfig& c = shards.front().config;
  const std::size_t world = shards.size();
  for (std::size_t r = 0; r < world; ++r) {
    if (shards[r].rank != r || shards[r].world_size != world || !(shards[r].config == c)) {
      throw ArgumentError("unshard_weights: shards must be the full rank-ordered set");
    }
  }
  ModelWeights w = allocate_weights(c);
  const std::size_t attn_cols = c.d_model / world;
  const std::size_t ff_cols = c.d_ff / world;
  const std::size_t vocab_cols = c.vocab_size / world;
  auto at = [](std::size_t v) { return static_cast<Eigen::Index>(v); };

  w.embedding = shards.front().embedding;
  w.final_ln_gain = shards.front().final_ln_gain;
  for (std::size_t r = 0; r < world; ++r) {
    const ShardedWeights& s = shards[r];
    w.lm_head.middleCols(at(r * vocab_cols), at(vocab_cols)) = s.lm_head;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      LayerWeights& dst = w.layers[l];
      const LayerShard& src = s.layers[l];
      dst.ln_attn_gain = src.ln_attn_gain;
      dst.ln_ffn_gain = src.ln_ffn_gain;
      dst.w_q.middleCols(at(r * attn_cols), at(attn_cols)) = src.w_q;
      dst.w_k.middleCols(at(r * attn_cols), at(attn_cols)) = src.w_k;
      dst.w_v.middleCols(at(r * attn_cols), at(attn_cols)) = src.w_v;
      dst.w_o.middleRows(at(r * attn_cols), at(attn_cols)) = src.w_o;
      dst.w_up.middleCols(at(r * ff_cols), at(ff_cols)) = src.w_up;
      dst.w_down.middleRows(at(r * ff_cols), at(ff_cols)) = src.w_down;
    }
  }
  return w;
}

}  // namespace shardlm
