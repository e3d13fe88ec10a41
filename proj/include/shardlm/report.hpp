// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "shardlm/collectives.hpp"
#include "shardlm/engine.hpp"

namespace shardlm {

/// Decode-step counter totals of one rank.
struct RankTotals {
  int rank = 0;
  std::uint64_t sync_points = 0;
  std::uint64_t wire_bytes_sent = 0;
  std::uint64_t wire_bytes_received = 0;
  std::uint64_t copied_bytes = 0;

  friend bool operator==(const RankTotals&, const RankTotals&) = default;
};

RankTotals totals_of(int rank, const std::vector<StepReport>& steps);

struct LatencySummary {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p90_ms = 0.0;  // nearest rank
};

LatencySummary summarize_latency(const std::vector<StepReport>& steps);

struct RunReport {
  ModelConfig model;
  EngineFlags flags;
  GenParams generation;
  std::uint64_t weight_seed = 0;
  int world_size = 1;
  TransportKind transport = TransportKind::InProcess;

  std::vector<std::uint32_t> tokens;
  StepReport prefill;
  /// Rank 0's view of every decode step.
  std::vector<StepReport> per_step;
  std::vector<RankTotals> ranks;
  /// Set when the run was checked against the reference forward pass.
  std::optional<bool> oracle_match;
};

nlohmann::json to_json(const RunReport& report);
/// Reads a report written by to_json. Throws ConfigError on malformed input.
RunReport report_from_json(const nlohmann::json& j);

/// Per-step table, one row per decode step.
std::string to_csv(const RunReport& report);

/// Metric-by-metric comparison as CSV (metric,a,b,delta,ratio) with
/// delta = a - b and ratio = a / b (1 when both are zero). Per-step metrics
/// are means over rank 0's steps. Throws ConfigError when the two runs used
/// different model configurations.
std::string compare_runs(const RunReport& a, const RunReport& b);

}  // namespace shardlm
