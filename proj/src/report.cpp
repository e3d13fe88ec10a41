// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "shardlm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace shardlm {

using nlohmann::json;

RankTotals totals_of(int rank, const std::vector<StepReport>& steps) {
  RankTotals t;
  t.rank = rank;
  for (const auto& s : steps) {
    t.sync_points += s.sync_points_delta;
    t.wire_bytes_sent += s.wire_bytes_delta;
    t.wire_bytes_received += s.wire_bytes_received_delta;
    t.copied_bytes += s.copied_bytes_delta;
  }
  return t;
}

LatencySummary summarize_latency(const std::vector<StepReport>& steps) {
  LatencySummary s;
  if (steps.empty()) return s;
  std::vector<double> ms;
  for (const auto& st : steps) ms.push_back(st.latency_ms);
  std::sort(ms.begin(), ms.end());
  double sum = 0.0;
  for (double v : ms) sum += v;
  const std::size_t n = ms.size();
  s.mean_ms = sum / static_cast<double>(n);
  s.median_ms = n % 2 == 1 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(n)));
  s.p90_ms = ms[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

namespace {

json model_json(const ModelConfig& c) {
  return {{"n_layers", c.n_layers},     {"d_model", c.d_model},
          {"n_heads", c.n_heads},       {"d_ff", c.d_ff},
          {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
          {"variant", to_string(c.variant)}, {"norm_eps", c.norm_eps}};
}

ModelConfig model_from(const json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.norm_eps = j.at("norm_eps").get<float>();
  return c;
}

json step_json(const StepReport& s) {
  return {{"step_index", s.step_index},
          {"token", s.token},
          {"latency_ms", s.latency_ms},
          {"sync_points_delta", s.sync_points_delta},
          {"wire_bytes_delta", s.wire_bytes_delta},
          {"wire_bytes_received_delta", s.wire_bytes_received_delta},
          {"copied_bytes_delta", s.copied_bytes_delta},
          {"selection_wire_bytes", s.selection_wire_bytes},
          {"broadcast_wire_bytes", s.broadcast_wire_bytes}};
}

StepReport step_from(const json& j) {
  StepReport s;
  s.step_index = j.at("step_index").get<std::size_t>();
  s.token = j.at("token").get<std::uint32_t>();
  s.latency_ms = j.at("latency_ms").get<double>();
  s.sync_points_delta = j.at("sync_points_delta").get<std::uint64_t>();
  s.wire_bytes_delta = j.at("wire_bytes_delta").get<std::uint64_t>();
  s.wire_bytes_received_delta = j.at("wire_bytes_received_delta").get<std::uint64_t>();
  s.copied_bytes_delta = j.at("copied_bytes_delta").get<std::uint64_t>();
  s.selection_wire_bytes = j.at("selection_wire_bytes").get<std::uint64_t>();
  s.broadcast_wire_bytes = j.at("broadcast_wire_bytes").get<std::uint64_t>();
  return s;
}

const char* onoff(bool b) { return b ? "on" : "off"; }
bool parse_onoff(const json& j) { return j.get<std::string>() == "on"; }

}  // namespace

json to_json(const RunReport& r) {
  json steps = json::array();
  for (const auto& s : r.per_step) steps.push_back(step_json(s));
  json ranks = json::array();
  for (const auto& t : r.ranks) {
    ranks.push_back({{"rank", t.rank},
                     {"sync_points", t.sync_points},
                     {"wire_bytes_sent", t.wire_bytes_sent},
                     {"wire_bytes_received", t.wire_bytes_received},
                     {"copied_bytes", t.copied_bytes}});
  }
  const LatencySummary lat = summarize_latency(r.per_step);
  const GenParams& g = r.generation;

  json out;
  out["config"] = {
      {"model", model_json(r.model)},
      {"flags",
       {{"token_id_broadcast", onoff(r.flags.token_id_broadcast)},
        {"local_topk", onoff(r.flags.local_topk)},
        {"fused_sync", onoff(r.flags.fused_sync)},
        {"zero_copy", onoff(r.flags.zero_copy)}}},
      {"generation",
       {{"prompt_len", g.prompt_tokens.size()},
        {"prompt_tokens", g.prompt_tokens},
        {"gen_len", g.gen_len},
        {"mode", to_string(g.mode)},
        {"top_k", g.top_k},
        {"temperature", g.temperature},
        {"seed", g.seed}}},
      {"weight_seed", r.weight_seed},
      {"world_size", r.world_size},
      {"transport", to_string(r.transport)}};
  out["tokens"] = r.tokens;
  out["prefill"] = step_json(r.prefill);
  out["per_step"] = steps;
  out["aggregates"] = {{"mean_latency_ms", lat.mean_ms},
                       {"median_latency_ms", lat.median_ms},
                       {"p90_latency_ms", lat.p90_ms},
                       {"per_rank", ranks}};
  if (r.oracle_match) out["verify"] = {{"oracle_match", *r.oracle_match}};
  return out;
}

RunReport report_from_json(const json& j) {
  try {
    RunReport r;
    const json& cfg = j.at("config");
    r.model = model_from(cfg.at("model"));
    const json& f = cfg.at("flags");
    r.flags.token_id_broadcast = parse_onoff(f.at("token_id_broadcast"));
    r.flags.local_topk = parse_onoff(f.at("local_topk"));
    r.flags.fused_sync = parse_onoff(f.at("fused_sync"));
    r.flags.zero_copy = parse_onoff(f.at("zero_copy"));
    const json& g = cfg.at("generation");
    r.generation.prompt_tokens = g.at("prompt_tokens").get<std::vector<std::uint32_t>>();
    r.generation.gen_len = g.at("gen_len").get<std::size_t>();
    r.generation.mode = parse_decode_mode(g.at("mode").get<std::string>());
    r.generation.top_k = g.at("top_k").get<std::size_t>();
    r.generation.temperature = g.at("temperature").get<float>();
    r.generation.seed = g.at("seed").get<std::uint64_t>();
    r.weight_seed = cfg.at("weight_seed").get<std::uint64_t>();
    r.world_size = cfg.at("world_size").get<int>();
    r.transport = cfg.at("transport").get<std::string>() == "tcp" ? TransportKind::Tcp
                                                                  : TransportKind::InProcess;
    r.tokens = j.at("tokens").get<std::vector<std::uint32_t>>();
    r.prefill = step_from(j.at("prefill"));
    for (const auto& s : j.at("per_step")) r.per_step.push_back(step_from(s));
    for (const auto& t : j.at("aggregates").at("per_rank")) {
      r.ranks.push_back({t.at("rank").get<int>(), t.at("sync_points").get<std::uint64_t>(),
                         t.at("wire_bytes_sent").get<std::uint64_t>(),
                         t.at("wire_bytes_received").get<std::uint64_t>(),
                         t.at("copied_bytes").get<std::uint64_t>()});
    }
    if (j.contains("verify")) r.oracle_match = j.at("verify").at("oracle_match").get<bool>();
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run report: ") + e.what());
  }
}

std::string to_csv(const RunReport& r) {
  std::ostringstream os;
  os << "step_index,token,latency_ms,sync_points_delta,wire_bytes_delta,"
        "wire_bytes_received_delta,copied_bytes_delta,selection_wire_bytes,"
        "broadcast_wire_bytes\n";
  for (const auto& s : r.per_step) {
    os << s.step_index << ',' << s.token << ',' << s.latency_ms << ',' << s.sync_points_delta
       << ',' << s.wire_bytes_delta << ',' << s.wire_bytes_received_delta << ','
       << s.copied_bytes_delta << ',' << s.selection_wire_bytes << ',' << s.broadcast_wire_bytes
       << '\n';
  }
  return os.str();
}

namespace {

std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

template <typename Field>
double per_step_mean(const RunReport& r, Field field) {
  if (r.per_step.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : r.per_step) sum += static_cast<double>(field(s));
  return sum / static_cast<double>(r.per_step.size());
}

}  // namespace

std::string compare_runs(const RunReport& a, const RunReport& b) {
  if (!(a.model == b.model)) {
    throw ConfigError("reports use different model configurations");
  }
  struct Row {
    const char* name;
    double a, b;
  };
  const LatencySummary la = summarize_latency(a.per_step);
  const LatencySummary lb = summarize_latency(b.per_step);
  auto mean = [&](auto field) {
    return std::pair{per_step_mean(a, field), per_step_mean(b, field)};
  };
  auto row = [](const char* name, std::pair<double, double> v) { return Row{name, v.first, v.second}; };

  const std::vector<Row> rows = {
      {"mean_latency_ms", la.mean_ms, lb.mean_ms},
      {"median_latency_ms", la.median_ms, lb.median_ms},
      {"p90_latency_ms", la.p90_ms, lb.p90_ms},
      row("sync_points_per_step", mean([](const StepReport& s) { return s.sync_points_delta; })),
      row("wire_bytes_sent_per_step", mean([](const StepReport& s) { return s.wire_bytes_delta; })),
      row("wire_bytes_received_per_step",
          mean([](const StepReport& s) { return s.wire_bytes_received_delta; })),
      row("copied_bytes_per_step", mean([](const StepReport& s) { return s.copied_bytes_delta; })),
      row("selection_wire_bytes_per_step",
          mean([](const StepReport& s) { return s.selection_wire_bytes; })),
      row("broadcast_wire_bytes_per_step",
          mean([](const StepReport& s) { return s.broadcast_wire_bytes; })),
      {"generated_tokens", static_cast<double>(a.tokens.size()),
       static_cast<double>(b.tokens.size())},
  };

  std::ostringstream os;
  os << "metric,a,b,delta,ratio\n";
  for (const Row& r : rows) {
    double ratio;
    if (r.a == 0.0 && r.b == 0.0) {
      ratio = 1.0;
    } else if (r.b == 0.0) {
      ratio = std::numeric_limits<double>::infinity();
    } else {
      ratio = r.a / r.b;
    }
    os << r.name << ',' << number(r.a) << ',' << number(r.b) << ',' << number(r.a - r.b) << ','
       << number(ratio) << '\n';
  }
  return os.str();
}

}  // namespace shardlm
