// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "shardlm/bench.hpp"
#include "shardlm/checkpoint.hpp"

namespace shardlm {

namespace {

std::shared_ptr<spdlog::logger> logger() {
  if (auto existing = spdlog::get("shardlm")) return existing;
  auto log = spdlog::stderr_logger_mt("shardlm");
  const char* level = std::getenv("SHARD_LOG");
  const std::string lv = level ? level : "";
  log->set_level(lv == "debug"  ? spdlog::level::debug
                 : lv == "info" ? spdlog::level::info
                                : spdlog::level::warn);
  return log;
}

bool is_on(const std::string& v) { return v == "on"; }

int free_local_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  socklen_t len = sizeof(addr);
  if (fd < 0 || ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    if (fd >= 0) ::close(fd);
    throw CommError("cannot reserve a loopback port");
  }
  ::close(fd);
  return ntohs(addr.sin_port);
}

// Re-executes this binary once per rank with --transport tcp, dropping the
// caller's transport/rank/endpoint flags.
int spawn_local(int argc, char** argv, int world_size, std::ostream& out) {
  std::vector<std::string> forwarded;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "spawn-local") continue;
    bool dropped = false;
    for (const char* flag : {"--transport", "--rank", "--endpoints"}) {
      if (arg == flag) {
        ++i;  // skip the value
        dropped = true;
      } else if (arg.starts_with(std::string(flag) + "=")) {
        dropped = true;
      }
    }
    if (!dropped) forwarded.push_back(arg);
  }

  std::string endpoints;
  for (int r = 0; r < world_size; ++r) {
    if (r) endpoints += ',';
    endpoints += "127.0.0.1:" + std::to_string(free_local_port());
  }
  logger()->info("spawn-local: {} ranks on {}", world_size, endpoints);

  out.flush();
  std::fflush(nullptr);
  std::vector<pid_t> children;
  for (int r = 0; r < world_size; ++r) {
    std::vector<std::string> args = {"shardlm"};
    args.insert(args.end(), forwarded.begin(), forwarded.end());
    for (const std::string& extra :
         {std::string("--transport"), std::string("tcp"), std::string("--rank"),
          std::to_string(r), std::string("--endpoints"), endpoints}) {
      args.push_back(extra);
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw CommError("fork failed");
    if (pid == 0) {
      std::vector<char*> cargs;
      for (auto& a : args) cargs.push_back(a.data());
      cargs.push_back(nullptr);
      ::execv("/proc/self/exe", cargs.data());
      std::_Exit(127);
    }
    children.push_back(pid);
  }

  int result = 0;
  for (pid_t pid : children) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 3;
    if (result == 0) result = code;
  }
  return result;
}

RunReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read report '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
  return report_from_json(j);
}

}  // namespace

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tensor-parallel CPU decoding benchmark"};
  app.set_help_all_flag("--help-all");

  BenchOptions o;
  std::string transport = "inproc";
  std::string variant = "parallel";
  std::string mode = "greedy";
  std::string token_id_broadcast = "on", local_topk = "on", zero_copy = "on", fused_sync;
  std::string checkpoint, report_path, format = "json";
  std::vector<std::uint32_t> prompt;
  bool verify = false;

  const auto onoff = CLI::IsMember({"on", "off"});
  app.add_option("--world-size", o.world_size, "Number of ranks")->capture_default_str();
  app.add_option("--transport", transport, "inproc|tcp")
      ->check(CLI::IsMember({"inproc", "tcp"}))
      ->capture_default_str();
  app.add_option("--rank", o.rank, "This process's rank (tcp)");
  app.add_option("--endpoints", o.endpoints, "host:port per rank (tcp)")->delimiter(',');
  app.add_option("--variant", variant, "parallel|sequential")
      ->check(CLI::IsMember({"parallel", "sequential"}))
      ->capture_default_str();
  app.add_option("--layers", o.model.n_layers)->capture_default_str();
  app.add_option("--d-model", o.model.d_model)->capture_default_str();
  app.add_option("--heads", o.model.n_heads)->capture_default_str();
  app.add_option("--d-ff", o.model.d_ff)->capture_default_str();
  app.add_option("--vocab", o.model.vocab_size)->capture_default_str();
  app.add_option("--max-seq-len", o.model.max_seq_len)->capture_default_str();
  app.add_option("--prompt-len", o.prompt_len)->capture_default_str();
  app.add_option("--gen-len", o.gen_len)->capture_default_str();
  app.add_option("--prompt", prompt, "Explicit prompt token ids, e.g. 3,17,99")->delimiter(',');
  app.add_option("--seed", o.seed, "Seeds weights and sampling")->capture_default_str();
  app.add_option("--prompt-seed", o.prompt_seed, "Seeds the random prompt")
      ->capture_default_str();
  app.add_option("--mode", mode, "greedy|topk")
      ->check(CLI::IsMember({"greedy", "topk"}))
      ->capture_default_str();
  app.add_option("--topk-k", o.top_k)->capture_default_str();
  app.add_option("--temperature", o.temperature)->capture_default_str();
  app.add_option("--token-id-broadcast", token_id_broadcast)->check(onoff)->capture_default_str();
  app.add_option("--local-topk", local_topk)->check(onoff)->capture_default_str();
  app.add_option("--fused-sync", fused_sync, "Default: on for parallel, off for sequential")
      ->check(onoff);
  app.add_option("--zero-copy", zero_copy)->check(onoff)->capture_default_str();
  app.add_option("--checkpoint", checkpoint, "Load MWT1 weights instead of generating them");
  app.add_flag("--verify", verify, "Check tokens against the reference forward pass");
  app.add_option("--report", report_path, "Write the report here instead of stdout");
  app.add_option("--format", format, "json|csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();

  auto* spawn = app.add_subcommand("spawn-local", "Launch every rank as a local TCP process");
  spawn->fallthrough();

  std::string compare_a, compare_b;
  auto* compare = app.add_subcommand("compare", "Compare two JSON run reports as CSV");
  compare->add_option("a", compare_a)->required();
  compare->add_option("b", compare_b)->required();

  std::string export_path;
  auto* export_cmd = app.add_subcommand("write-checkpoint", "Write generated weights as MWT1");
  export_cmd->add_option("path", export_path)->required();
  export_cmd->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*compare) {
      out << compare_runs(read_report(compare_a), read_report(compare_b));
      return 0;
    }

    o.transport = transport == "tcp" ? TransportKind::Tcp : TransportKind::InProcess;
    o.model.variant = parse_variant(variant);
    o.mode = parse_decode_mode(mode);
    o.flags.token_id_broadcast = is_on(token_id_broadcast);
    o.flags.local_topk = is_on(local_topk);
    o.flags.zero_copy = is_on(zero_copy);
    o.flags.fused_sync = fused_sync.empty() ? o.model.variant == ResidualVariant::Parallel
                                            : is_on(fused_sync);
    if (!prompt.empty()) o.prompt = prompt;
    if (!checkpoint.empty()) o.checkpoint = checkpoint;
    o.verify = verify;

    if (*export_cmd) {
      save_checkpoint(generate_weights(o.model, o.seed), export_path);
      return 0;
    }
    if (*spawn) {
      validate_options(o);
      return spawn_local(argc, argv, o.world_size, out);
    }

    logger()->info("world_size={} transport={} variant={} {}", o.world_size, transport, variant,
                   o.flags.to_string());
    const std::optional<RunReport> report = run_benchmark(o);
    if (!report) return 0;
    for (const auto& s : report->per_step) {
      logger()->debug("step {} token {} {:.3f} ms sync={} wire={} copied={}", s.step_index,
                      s.token, s.latency_ms, s.sync_points_delta, s.wire_bytes_delta,
                      s.copied_bytes_delta);
    }

    const std::string text =
        format == "csv" ? to_csv(*report) : to_json(*report).dump(2) + "\n";
    if (report_path.empty()) {
      out << text;
    } else {
      std::ofstream file(report_path);
      if (!file) throw ConfigError("cannot write report to '" + report_path + "'");
      file << text;
    }
    if (report->oracle_match && !*report->oracle_match) {
      err << "verify: generated tokens differ from the reference forward pass\n";
      return 1;
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const ArgumentError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace shardlm
