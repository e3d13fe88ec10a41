// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "shardlm/report.hpp"

namespace shardlm {

/// A fully resolved benchmark run. Defaults describe the desk-scale model:
/// 512-token prompt, 32 generated tokens, four in-process ranks.
struct BenchOptions {
  int world_size = 4;
  TransportKind transport = TransportKind::InProcess;
  int rank = 0;  // TCP only
  std::vector<std::string> endpoints;

  ModelConfig model;
  std::optional<std::filesystem::path> checkpoint;

  std::size_t prompt_len = 512;
  std::optional<std::vector<std::uint32_t>> prompt;
  std::size_t gen_len = 32;
  std::uint64_t seed = 0;
  std::uint64_t prompt_seed = 1;
  DecodeMode mode = DecodeMode::Greedy;
  std::size_t top_k = 8;
  float temperature = 1.0f;

  EngineFlags flags;
  bool verify = false;
};

/// The prompt, weights and generation parameters an options set resolves to.
GenParams generation_params(const BenchOptions& options);
ModelWeights load_or_generate_weights(const BenchOptions& options);

/// Validates everything that can be checked before any rank starts.
/// Throws ConfigError (or CheckpointError) on a bad configuration.
void validate_options(const BenchOptions& options);

/// Runs the benchmark. In-process runs drive every rank on its own thread;
/// TCP runs act as options.rank of a multi-process group. Returns rank 0's
/// report; other TCP ranks return an empty optional.
std::optional<RunReport> run_benchmark(const BenchOptions& options);

/// Command-line entry point. Exit codes: 0 success, 1 oracle mismatch under
/// --verify, 2 configuration error, 3 runtime failure.
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace shardlm
