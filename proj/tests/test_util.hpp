// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

// Shared helpers for the test binaries: rank drivers, seeded data, and the
// independent reference kernels (written without any library kernel).

#pragma once

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "shardlm/collectives.hpp"
#include "shardlm/engine.hpp"
#include "shardlm/model.hpp"
#include "shardlm/oracle.hpp"
#include "shardlm/tensor.hpp"

namespace shardlm::testing {

/// Runs fn(comm) for every communicator on its own thread and rethrows the
/// first failure.
inline void run_ranks(std::vector<Communicator>& comms,
                      const std::function<void(Communicator&)>& fn) {
  std::vector<std::exception_ptr> errors(comms.size());
  std::vector<std::thread> threads;
  for (std::size_t r = 0; r < comms.size(); ++r) {
    threads.emplace_back([&, r] {
      try {
        fn(comms[r]);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline void run_in_process(int world, const std::function<void(Communicator&)>& fn) {
  std::vector<Communicator> comms = create_in_process_group(world);
  run_ranks(comms, fn);
}

inline int free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  socklen_t len = sizeof(addr);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

inline std::vector<std::string> loopback_endpoints(int world) {
  std::vector<std::string> eps;
  for (int r = 0; r < world; ++r) eps.push_back("127.0.0.1:" + std::to_string(free_port()));
  return eps;
}

/// Connects a full TCP mesh on loopback, one thread per rank.
inline std::vector<Communicator> make_tcp_group(int world) {
  const auto eps = loopback_endpoints(world);
  std::vector<std::optional<Communicator>> slots(static_cast<std::size_t>(world));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(world));
  std::vector<std::thread> threads;
  for (int r = 0; r < world; ++r) {
    threads.emplace_back([&, r] {
      try {
        slots[static_cast<std::size_t>(r)].emplace(connect_tcp_group(r, world, eps));
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<Communicator> comms;
  for (auto& s : slots) comms.push_back(std::move(*s));
  return comms;
}

inline Tensor random_tensor(Eigen::Index rows, Eigen::Index cols, std::uint32_t seed,
                            float lo = -1.0f, float hi = 1.0f) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = dist(gen);
  return t;
}

inline std::vector<float> random_floats(std::size_t n, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(float)) == 0;
}

inline bool bit_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      m = std::max(m, std::abs(static_cast<double>(a(i, j)) - static_cast<double>(b(i, j))));
    }
  }
  return m;
}

// Reference kernels, deliberately naive and independent of tensor.hpp.

/// Plain triple loop, f32 accumulation, p ascending.
inline std::vector<float> naive_matmul(const std::vector<float>& a, const std::vector<float>& b,
                                       std::size_t m, std::size_t k, std::size_t n) {
  std::vector<float> c(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      float sum = 0.0f;
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
      c[i * n + j] = sum;
    }
  }
  return c;
}

inline std::vector<double> softmax_f64(const std::vector<double>& x) {
  double max = x[0];
  for (double v : x) max = std::max(max, v);
  std::vector<double> y(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += (y[i] = std::exp(x[i] - max));
  for (double& v : y) v /= sum;
  return y;
}

inline std::vector<double> rms_norm_f64(const std::vector<double>& x, const std::vector<double>& g,
                                        double eps) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double denom = std::sqrt(ss / static_cast<double>(x.size()) + eps);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / denom * g[i];
  return y;
}

inline double gelu_f64(double x) {
  const double pi = 3.14159265358979323846;
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / pi) * (x + 0.044715 * x * x * x)));
}

/// Small model used across engine tests; divisible for W in {1, 2, 4, 8}.
inline ModelConfig tiny_config(ResidualVariant variant, std::size_t layers = 2) {
  ModelConfig c;
  c.n_layers = layers;
  c.d_model = 32;
  c.n_heads = 8;
  c.d_ff = 64;
  c.vocab_size = 64;
  c.max_seq_len = 48;
  c.variant = variant;
  return c;
}

/// Generates on `world` in-process ranks; results are indexed by rank.
inline std::vector<GenerationResult> run_engine(const ModelWeights& w, int world, EngineFlags flags,
                                         const GenParams& params) {
  std::vector<ShardedWeights> shards;
  for (int r = 0; r < world; ++r) {
    shards.push_back(shard_weights(w, std::size_t(r), std::size_t(world)));
  }
  auto comms = create_in_process_group(world);
  std::vector<GenerationResult> results(static_cast<std::size_t>(world));
  run_ranks(comms, [&](Communicator& c) {
    Engine engine(c, shards[std::size_t(c.rank())], flags);
    results[std::size_t(c.rank())] = engine.generate(params);
  });
  return results;
}

/// Rank-ordered concatenation of the final logit shards.
inline Tensor concat_logits(const std::vector<GenerationResult>& results) {
  Eigen::Index cols = 0;
  for (const auto& r : results) cols += r.final_logits_shard.cols();
  Tensor all(1, cols);
  Eigen::Index at = 0;
  for (const auto& r : results) {
    all.middleCols(at, r.final_logits_shard.cols()) = r.final_logits_shard;
    at += r.final_logits_shard.cols();
  }
  return all;
}

inline Tensor oracle_logits_after(const ModelWeights& w, const GenParams& p,
                           const std::vector<std::uint32_t>& generated) {
  std::vector<std::uint32_t> seq = p.prompt_tokens;
  seq.insert(seq.end(), generated.begin(), generated.end());
  return oracle_forward(w, seq);
}

}  // namespace shardlm::testing
