// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "shardlm/oracle.hpp"
#include "test_util.hpp"

namespace shardlm {
namespace {

using testing::tiny_config;
using Vec = std::vector<double>;

// Double-precision forward pass written from the architecture alone.
class F64Reference {
 public:
  explicit F64Reference(const ModelWeights& w) : w_(w), keys_(w.layers.size()), vals_(w.layers.size()) {}

  Vec step(std::uint32_t token) {
    const std::size_t d = w_.config.d_model;
    Vec x(d);
    for (std::size_t j = 0; j < d; ++j) x[j] = w_.embedding(token, long(j));
    for (std::size_t l = 0; l < w_.layers.size(); ++l) x = layer(x, l);
    return matvec(norm(x, w_.final_ln_gain), w_.lm_head);
  }

 private:
  static Vec matvec(const Vec& x, const Tensor& m) {
    Vec y(std::size_t(m.cols()), 0.0);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) y[std::size_t(j)] += x[std::size_t(i)] * m(i, j);
    }
    return y;
  }
  Vec norm(const Vec& x, const Tensor& g) const {
    return testing::rms_norm_f64(x, Vec(g.data(), g.data() + g.size()), w_.config.norm_eps);
  }

  Vec attend(const Vec& h, std::size_t l) {
    const LayerWeights& lw = w_.layers[l];
    const Vec q = matvec(h, lw.w_q);
    keys_[l].push_back(matvec(h, lw.w_k));
    vals_[l].push_back(matvec(h, lw.w_v));
    const std::size_t heads = w_.config.n_heads, dh = w_.config.d_head();
    Vec out(w_.config.d_model, 0.0);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      Vec scores;
      for (const Vec& k : keys_[l]) {
        double dot = 0.0;
        for (std::size_t e = 0; e < dh; ++e) dot += q[hd * dh + e] * k[hd * dh + e];
        scores.push_back(dot / std::sqrt(double(dh)));
      }
      const Vec p = testing::softmax_f64(scores);
      for (std::size_t t = 0; t < p.size(); ++t) {
        for (std::size_t e = 0; e < dh; ++e) out[hd * dh + e] += p[t] * vals_[l][t][hd * dh + e];
      }
    }
    return matvec(out, lw.w_o);
  }

  Vec ffn(const Vec& h, std::size_t l) {
    Vec up = matvec(h, w_.layers[l].w_up);
    for (double& v : up) v = testing::gelu_f64(v);
    return matvec(up, w_.layers[l].w_down);
  }

  Vec layer(const Vec& x, std::size_t l) {
    const LayerWeights& lw = w_.layers[l];
    Vec out = x;
    if (w_.config.variant == ResidualVariant::Parallel) {
      const Vec h = norm(x, lw.ln_attn_gain);
      const Vec a = attend(h, l), f = ffn(h, l);
      for (std::size_t j = 0; j < x.size(); ++j) out[j] += a[j] + f[j];
      return out;
    }
    const Vec a = attend(norm(x, lw.ln_attn_gain), l);
    for (std::size_t j = 0; j < x.size(); ++j) out[j] += a[j];
    const Vec f = ffn(norm(out, lw.ln_ffn_gain), l);
    for (std::size_t j = 0; j < x.size(); ++j) out[j] += f[j];
    return out;
  }

  const ModelWeights& w_;
  std::vector<std::vector<Vec>> keys_, vals_;
};

class OracleVariants : public ::testing::TestWithParam<ResidualVariant> {};
INSTANTIATE_TEST_SUITE_P(Both, OracleVariants,
                         ::testing::Values(ResidualVariant::Parallel, ResidualVariant::Sequential),
                         [](const auto& info) { return to_string(info.param); });

TEST_P(OracleVariants, MatchesF64Reference) {
  const ModelConfig c = tiny_config(GetParam(), 3);
  const ModelWeights w = generate_weights(c, 21);
  OracleSession session(w);
  F64Reference ref(w);
  for (std::uint32_t token : random_prompt(20, c.vocab_size, 5)) {
    const Tensor got = session.step(token);
    const Vec expected = ref.step(token);
    for (std::size_t j = 0; j < expected.size(); ++j) {
      ASSERT_NEAR(got(0, long(j)), expected[j], 1e-5) << "position " << session.length();
    }
  }
}

TEST_P(OracleVariants, ForwardEqualsIncrementalSession) {
  const ModelConfig c = tiny_config(GetParam());
  const ModelWeights w = generate_weights(c, 22);
  const auto tokens = random_prompt(9, c.vocab_size, 6);
  OracleSession session(w);
  Tensor last;
  for (auto t : tokens) last = session.step(t);
  EXPECT_TRUE(testing::bit_equal(last, oracle_forward(w, tokens)));
  EXPECT_EQ(session.length(), 9u);
}

TEST_P(OracleVariants, EarlierPositionsIgnoreLaterTokens) {
  const ModelConfig c = tiny_config(GetParam());
  const ModelWeights w = generate_weights(c, 23);
  std::vector<std::uint32_t> a = {5, 9, 13, 2, 40};
  std::vector<std::uint32_t> b = a;
  b[3] = 41;
  b[4] = 7;
  EXPECT_TRUE(testing::bit_equal(oracle_forward(w, std::span(a).first(3)),
                                 oracle_forward(w, std::span(b).first(3))));
  EXPECT_FALSE(testing::bit_equal(oracle_forward(w, a), oracle_forward(w, b)));
}

// With no layers, logits are rms_norm(embedding row) times the LM head.
TEST(Oracle, ZeroLayerModelByHand) {
  ModelConfig c = tiny_config(ResidualVariant::Parallel, 0);
  c.d_model = 2;
  c.n_heads = 1;
  c.vocab_size = 2;
  ModelWeights w = allocate_weights(c);
  w.embedding << 3.0f, 4.0f, 1.0f, 1.0f;
  w.lm_head << 1.0f, 0.0f, 0.0f, 2.0f;
  // rms([3, 4]) = sqrt(12.5)
  const double denom = std::sqrt(12.5 + double(c.norm_eps));
  const std::vector<std::uint32_t> tok = {0};
  const Tensor logits = oracle_forward(w, tok);
  EXPECT_NEAR(logits(0, 0), 3.0 / denom, 1e-6);
  EXPECT_NEAR(logits(0, 1), 8.0 / denom, 1e-6);

  GenParams p;
  p.prompt_tokens = {0};
  p.gen_len = 3;
  // Token 1 wins from [3, 4]; from [1, 1] logits are [x, 2x] so token 1 again.
  EXPECT_EQ(oracle_generate(w, p), (std::vector<std::uint32_t>{1, 1, 1}));
}

TEST(Oracle, ZeroGenerationLength) {
  const ModelConfig c = tiny_config(ResidualVariant::Parallel);
  const ModelWeights w = generate_weights(c, 24);
  GenParams p;
  p.prompt_tokens = {1, 2};
  p.gen_len = 0;
  EXPECT_TRUE(oracle_generate(w, p).empty());
}

TEST(Oracle, GreedyPicksArgmaxOfForward) {
  const ModelConfig c = tiny_config(ResidualVariant::Sequential);
  const ModelWeights w = generate_weights(c, 25);
  GenParams p;
  p.prompt_tokens = random_prompt(6, c.vocab_size, 8);
  p.gen_len = 5;
  const auto out = oracle_generate(w, p);
  std::vector<std::uint32_t> seq = p.prompt_tokens;
  for (std::uint32_t t : out) {
    const Tensor logits = oracle_forward(w, seq);
    EXPECT_EQ(t, argmax(std::span<const float>(logits.data(), std::size_t(logits.size()))));
    seq.push_back(t);
  }
}

TEST(Oracle, SamplingIsDeterministicPerSeed) {
  const ModelConfig c = tiny_config(ResidualVariant::Parallel);
  const ModelWeights w = generate_weights(c, 26);
  GenParams p;
  p.prompt_tokens = {3, 1, 4};
  p.gen_len = 12;
  p.mode = DecodeMode::TopK;
  p.top_k = 16;
  p.temperature = 2.0f;
  p.seed = 1;
  const auto a = oracle_generate(w, p);
  EXPECT_EQ(a, oracle_generate(w, p));
  p.seed = 2;
  EXPECT_NE(a, oracle_generate(w, p));
}

}  // namespace
}  // namespace shardlm
