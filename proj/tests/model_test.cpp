// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "shardlm/model.hpp"
#include "shardlm/splitmix.hpp"
#include "test_util.hpp"

namespace shardlm {
namespace {

using testing::bit_equal;
using testing::tiny_config;

// Written out independently of splitmix.hpp.
struct RefSplitMix {
  std::uint64_t s;
  std::uint64_t next() {
    std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  float weight() {
    const double u = static_cast<double>(next() >> 40) / 16777216.0;
    return static_cast<float>((u * 2.0 - 1.0) * 0.1);
  }
};

TEST(SplitMix, KnownVector) {
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xE220A8397B1DCDAFULL);
  RefSplitMix ref{0};
  SplitMix64 again(0);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(again.next(), ref.next());
}

TEST(Generator, SameSeedSameWeights) {
  const ModelConfig c = tiny_config(ResidualVariant::Parallel);
  const ModelWeights a = generate_weights(c, 42);
  const ModelWeights b = generate_weights(c, 42);
  std::vector<const Tensor*> ta, tb;
  for_each_tensor(a, [&](const std::string&, const Tensor& t) { ta.push_back(&t); });
  for_each_tensor(b, [&](const std::string&, const Tensor& t) { tb.push_back(&t); });
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_TRUE(bit_equal(*ta[i], *tb[i]));
}

TEST(Generator, DifferentSeedsDiffer) {
  const ModelConfig c = tiny_config(ResidualVariant::Parallel);
  EXPECT_FALSE(bit_equal(generate_weights(c, 1).embedding, generate_weights(c, 2).embedding));
}

TEST(Generator, FollowsCanonicalStreamOrder) {
  for (auto variant : {ResidualVariant::Parallel, ResidualVariant::Sequential}) {
    const ModelConfig c = tiny_config(variant);
    const ModelWeights w = generate_weights(c, 1);
    RefSplitMix ref{1};
    for_each_tensor(w, [&](const std::string& name, const Tensor& t) {
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        const float expected = is_norm_gain(name) ? 1.0f : ref.weight();
        ASSERT_EQ(t.data()[i], expected) << name << "[" << i << "]";
      }
    });
  }
}

TEST(Generator, ValuesInRange) {
  const ModelWeights w = generate_weights(tiny_config(ResidualVariant::Sequential), 9);
  for_each_tensor(w, [&](const std::string& name, const Tensor& t) {
    if (is_norm_gain(name)) return;
    EXPECT_LE(t.cwiseAbs().maxCoeff(), 0.1f) << name;
  });
}

TEST(Weights, CanonicalNamesAndShapes) {
  const ModelConfig c = tiny_config(ResidualVariant::Sequential, 1);
  const ModelWeights w = allocate_weights(c);
  std::vector<std::string> names;
  for_each_tensor(w, [&](const std::string& n, const Tensor&) { names.push_back(n); });
  EXPECT_EQ(names, (std::vector<std::string>{"embedding", "layers.0.ln_attn_gain",
                                             "layers.0.ln_ffn_gain", "layers.0.w_q",
                                             "layers.0.w_k", "layers.0.w_v", "layers.0.w_o",
                                             "layers.0.w_up", "layers.0.w_down", "final_ln_gain",
                                             "lm_head"}));
  EXPECT_EQ(w.embedding.rows(), 64);
  EXPECT_EQ(w.embedding.cols(), 32);
  EXPECT_EQ(w.layers[0].w_up.rows(), 32);
  EXPECT_EQ(w.layers[0].w_up.cols(), 64);
  EXPECT_EQ(w.lm_head.rows(), 32);
  EXPECT_EQ(w.lm_head.cols(), 64);

  const ModelWeights p = allocate_weights(tiny_config(ResidualVariant::Parallel, 1));
  names.clear();
  for_each_tensor(p, [&](const std::string& n, const Tensor&) { names.push_back(n); });
  EXPECT_EQ(names[1], "layers.0.ln_gain");
  EXPECT_EQ(names.size(), 10u);
}

TEST(Sharding, WorldOfOneIsIdentity) {
  const ModelWeights w = generate_weights(tiny_config(ResidualVariant::Parallel), 3);
  const ShardedWeights s = shard_weights(w, 0, 1);
  EXPECT_TRUE(bit_equal(s.layers[0].w_q, w.layers[0].w_q));
  EXPECT_TRUE(bit_equal(s.layers[1].w_down, w.layers[1].w_down));
  EXPECT_TRUE(bit_equal(s.lm_head, w.lm_head));
  EXPECT_EQ(s.vocab_offset, 0u);
}

TEST(Sharding, ColumnSplitExample) {
  ModelConfig c = tiny_config(ResidualVariant::Parallel, 1);
  c.d_ff = 8;
  ModelWeights w = allocate_weights(c);
  for (Eigen::Index j = 0; j < 8; ++j) w.layers[0].w_up.col(j).setConstant(float(j));
  const ShardedWeights r0 = shard_weights(w, 0, 2);
  const ShardedWeights r1 = shard_weights(w, 1, 2);
  ASSERT_EQ(r0.layers[0].w_up.cols(), 4);
  for (Eigen::Index j = 0; j < 4; ++j) {
    EXPECT_EQ(r0.layers[0].w_up(0, j), float(j));
    EXPECT_EQ(r1.layers[0].w_up(0, j), float(j + 4));
  }
  ASSERT_EQ(r1.layers[0].w_down.rows(), 4);
}

TEST(Sharding, RoundTrip) {
  for (auto variant : {ResidualVariant::Parallel, ResidualVariant::Sequential}) {
    const ModelWeights w = generate_weights(tiny_config(variant), 5);
    for (std::size_t world : {1u, 2u, 4u, 8u}) {
      std::vector<ShardedWeights> shards;
      for (std::size_t r = 0; r < world; ++r) shards.push_back(shard_weights(w, r, world));
      const ModelWeights back = unshard_weights(shards);
      std::vector<const Tensor*> orig;
      for_each_tensor(w, [&](const std::string&, const Tensor& t) { orig.push_back(&t); });
      std::size_t i = 0;
      for_each_tensor(back, [&](const std::string& name, const Tensor& t) {
        EXPECT_TRUE(bit_equal(t, *orig[i++])) << name << " W=" << world;
      });
    }
  }
}

TEST(Sharding, VocabOffsetAndHeads) {
  const ModelWeights w = generate_weights(tiny_config(ResidualVariant::Parallel), 5);
  const ShardedWeights s = shard_weights(w, 3, 4);
  EXPECT_EQ(s.vocab_offset, 48u);
  EXPECT_EQ(s.local_vocab(), 16u);
  EXPECT_EQ(s.local_heads(), 2u);
  EXPECT_TRUE(bit_equal(s.embedding, w.embedding));
}

TEST(Sharding, ColumnParallelConcatIsBitExact) {
  const ModelWeights w = generate_weights(tiny_config(ResidualVariant::Parallel), 6);
  const Tensor x = testing::random_tensor(1, 32, 1);
  const Tensor full = matmul(x, w.layers[0].w_up);
  for (std::size_t world : {2u, 4u}) {
    Tensor cat(1, 64);
    Eigen::Index at = 0;
    for (std::size_t r = 0; r < world; ++r) {
      const Tensor part = matmul(x, shard_weights(w, r, world).layers[0].w_up);
      cat.middleCols(at, part.cols()) = part;
      at += part.cols();
    }
    EXPECT_TRUE(bit_equal(cat, full));
  }
}

TEST(Sharding, RowParallelSumIsClose) {
  const ModelWeights w = generate_weights(tiny_config(ResidualVariant::Parallel), 6);
  const Tensor h = testing::random_tensor(1, 64, 2);
  const Tensor full = matmul(h, w.layers[0].w_down);
  for (std::size_t world : {2u, 4u, 8u}) {
    Tensor sum = Tensor::Zero(1, 32);
    const Eigen::Index width = 64 / static_cast<Eigen::Index>(world);
    for (std::size_t r = 0; r < world; ++r) {
      const Tensor part = matmul(h.middleCols(static_cast<Eigen::Index>(r) * width, width),
                                 shard_weights(w, r, world).layers[0].w_down);
      sum += part;
    }
    EXPECT_LT(testing::max_abs_diff(sum, full), 1e-4);
  }
}

TEST(Sharding, IndivisibleDimensionIsNamed) {
  ModelConfig c = tiny_config(ResidualVariant::Parallel);
  c.n_heads = 4;
  c.d_model = 32;
  try {
    c.validate_world_size(3);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("n_heads"), std::string::npos);
  }
  c.n_heads = 6;
  c.d_model = 36;
  c.d_ff = 64;
  try {
    c.validate_world_size(3);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("d_ff"), std::string::npos);
  }
  c.d_ff = 66;
  c.vocab_size = 64;
  try {
    c.validate_world_size(3);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("vocab_size"), std::string::npos);
  }
}

TEST(Config, Validation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.d_model = 100;
  c.n_heads = 8;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_variant("diagonal"), ConfigError);
  EXPECT_EQ(parse_variant("sequential"), ResidualVariant::Sequential);
}

}  // namespace
}  // namespace shardlm
