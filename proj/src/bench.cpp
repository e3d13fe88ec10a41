// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "shardlm/bench.hpp"

#include <cstring>
#include <exception>
#include <thread>

#include "shardlm/checkpoint.hpp"
#include "shardlm/oracle.hpp"

namespace shardlm {

GenParams generation_params(const BenchOptions& o) {
  GenParams p;
  p.prompt_tokens =
      o.prompt ? *o.prompt : random_prompt(o.prompt_len, o.model.vocab_size, o.prompt_seed);
  p.gen_len = o.gen_len;
  p.mode = o.mode;
  p.top_k = o.top_k;
  p.temperature = o.temperature;
  p.seed = o.seed;
  return p;
}

ModelWeights load_or_generate_weights(const BenchOptions& o) {
  return o.checkpoint ? load_checkpoint(*o.checkpoint, o.model) : generate_weights(o.model, o.seed);
}

void validate_options(const BenchOptions& o) {
  if (o.world_size < 1) throw ConfigError("world size must be at least 1");
  o.model.validate();
  o.model.validate_world_size(static_cast<std::size_t>(o.world_size));
  o.flags.validate(o.model.variant);
  generation_params(o).validate(o.model);
  if (o.transport == TransportKind::Tcp) {
    if (o.rank < 0 || o.rank >= o.world_size) {
      throw ConfigError("rank " + std::to_string(o.rank) + " outside world of size " +
                        std::to_string(o.world_size));
    }
    if (o.endpoints.size() != static_cast<std::size_t>(o.world_size)) {
      throw ConfigError("tcp transport needs exactly " + std::to_string(o.world_size) +
                        " endpoints, got " + std::to_string(o.endpoints.size()));
    }
  }
}

namespace {

RunReport base_report(const BenchOptions& o, const GenParams& params) {
  RunReport r;
  r.model = o.model;
  r.flags = o.flags;
  r.generation = params;
  r.weight_seed = o.seed;
  r.world_size = o.world_size;
  r.transport = o.transport;
  return r;
}

void fill_from_rank0(RunReport& r, const GenerationResult& g) {
  r.tokens = g.tokens;
  r.prefill = g.prefill;
  r.per_step = g.steps;
}

std::optional<RunReport> run_in_process(const BenchOptions& o, const ModelWeights& weights,
                                        const GenParams& params) {
  const int world = o.world_size;
  std::vector<Communicator> comms = create_in_process_group(world);
  std::vector<GenerationResult> results(static_cast<std::size_t>(world));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(world));

  std::vector<std::thread> workers;
  for (int r = 0; r < world; ++r) {
    workers.emplace_back([&, r] {
      try {
        const ShardedWeights shard =
            shard_weights(weights, static_cast<std::size_t>(r), static_cast<std::size_t>(world));
        Engine engine(comms[static_cast<std::size_t>(r)], shard, o.flags);
        results[static_cast<std::size_t>(r)] = engine.generate(params);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const auto& res : results) {
    if (res.tokens != results.front().tokens) {
      throw ProtocolError("ranks disagree on the generated token sequence");
    }
  }

  RunReport report = base_report(o, params);
  fill_from_rank0(report, results.front());
  for (int r = 0; r < world; ++r) {
    report.ranks.push_back(totals_of(r, results[static_cast<std::size_t>(r)].steps));
  }
  return report;
}

std::optional<RunReport> run_tcp(const BenchOptions& o, const ModelWeights& weights,
                                 const GenParams& params) {
  Communicator comm = connect_tcp_group(o.rank, o.world_size, o.endpoints);
  const ShardedWeights shard = shard_weights(weights, static_cast<std::size_t>(o.rank),
                                             static_cast<std::size_t>(o.world_size));
  GenerationResult result;
  {
    Engine engine(comm, shard, o.flags);
    result = engine.generate(params);
  }

  // Collected after measurement so the exchange itself is not counted.
  const RankTotals mine = totals_of(o.rank, result.steps);
  const std::uint64_t packed[4] = {mine.sync_points, mine.wire_bytes_sent,
                                   mine.wire_bytes_received, mine.copied_bytes};
  const std::vector<std::byte> all = comm.gather_bytes(std::as_bytes(std::span(packed)), 0);
  comm.barrier();
  comm.shutdown();
  if (o.rank != 0) return std::nullopt;

  RunReport report = base_report(o, params);
  fill_from_rank0(report, result);
  for (int r = 0; r < o.world_size; ++r) {
    std::uint64_t v[4];
    std::memcpy(v, all.data() + static_cast<std::size_t>(r) * sizeof(v), sizeof(v));
    report.ranks.push_back({r, v[0], v[1], v[2], v[3]});
  }
  return report;
}

}  // namespace

std::optional<RunReport> run_benchmark(const BenchOptions& o) {
  validate_options(o);
  const ModelWeights weights = load_or_generate_weights(o);
  const GenParams params = generation_params(o);

  std::optional<RunReport> report = o.transport == TransportKind::InProcess
                                        ? run_in_process(o, weights, params)
                                        : run_tcp(o, weights, params);
  if (report && o.verify) report->oracle_match = oracle_generate(weights, params) == report->tokens;
  return report;
}

}  // namespace shardlm
