// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

// Rank-addressed blocking collectives over a pluggable point-to-point
// transport (in-process mailboxes or a TCP full mesh).
//
// All collectives use a star topology rooted at one rank. Counter rules:
//   broadcast        root sends len to each of the W-1 other ranks
//   gather           every non-root sends its len to the root
//   all_reduce_sum   gather to rank 0, rank 0 sums ranks 0..W-1 in order,
//                    then broadcasts the sum
//   reduce_topk_gather  each non-root sends 8 bytes per candidate
// Every collective increments sync_points by one on every rank, W = 1
// included. Frame headers never count toward wire bytes.

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "shardlm/tensor.hpp"

namespace shardlm {

enum class TransportKind { InProcess, Tcp };

std::string to_string(TransportKind kind);

struct CommStats {
  std::uint64_t sync_points = 0;
  std::uint64_t wire_bytes_sent = 0;
  std::uint64_t wire_bytes_received = 0;
  std::uint64_t copied_bytes = 0;
  std::uint64_t messages_sent = 0;

  CommStats operator-(const CommStats& earlier) const {
    return {sync_points - earlier.sync_points, wire_bytes_sent - earlier.wire_bytes_sent,
            wire_bytes_received - earlier.wire_bytes_received,
            copied_bytes - earlier.copied_bytes, messages_sent - earlier.messages_sent};
  }
  friend bool operator==(const CommStats&, const CommStats&) = default;
};

/// Point-to-point byte transport underneath a Communicator.
///
/// Messages between a pair of ranks are delivered in order. recv() must
/// fill `out` exactly; a message of any other length, or one tagged with a
/// different collective id, is a ProtocolError.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportKind kind() const = 0;
  virtual void send(int dst, std::uint64_t collective_id, std::span<const std::byte> payload) = 0;
  virtual void recv(int src, std::uint64_t collective_id, std::span<std::byte> out) = 0;
  virtual void close() = 0;
};

/// Handle to a communicator-owned f32 region. Compute kernels write their
/// output straight into the region, and the registered collectives send
/// from and receive into it without staging.
struct RegisteredBuffer {
  std::uint64_t owner = 0;
  std::uint32_t id = 0;
  std::size_t length_bytes = 0;

  std::size_t length_floats() const { return length_bytes / sizeof(float); }
};

class Communicator {
 public:
  Communicator(int rank, int world_size, std::unique_ptr<Transport> transport);
  Communicator(Communicator&&) noexcept;
  Communicator& operator=(Communicator&&) noexcept;
  Communicator(const Communicator&) = delete;
  Communicator& operator=(const Communicator&) = delete;
  ~Communicator();

  int rank() const { return rank_; }
  int world_size() const { return world_size_; }
  TransportKind transport() const;
  const CommStats& stats() const { return stats_; }
  bool is_shut_down() const { return shut_down_; }

  /// Every rank's buffer becomes root's buffer.
  void broadcast(std::span<std::byte> buffer, int root);
  template <typename T>
  void broadcast(std::span<T> buffer, int root) {
    broadcast(std::as_writable_bytes(buffer), root);
  }

  /// Elementwise sum over ranks, identical bytes on every rank afterwards.
  /// The caller's buffer is staged through an internal region: one copy in,
  /// one copy out, both counted in copied_bytes.
  void all_reduce_sum(std::span<float> buffer);

  RegisteredBuffer register_buffer(std::size_t length_bytes);
  /// The writable region behind a handle registered on this communicator.
  std::span<float> region(const RegisteredBuffer& buffer);
  /// all_reduce_sum performed in place on a registered region, with no copies.
  void all_reduce_sum_registered(const RegisteredBuffer& buffer);

  /// Rank-ordered concatenation on root; empty on other ranks.
  std::vector<float> gather(std::span<const float> buffer, int root);
  std::vector<std::byte> gather_bytes(std::span<const std::byte> buffer, int root);

  /// Root receives all W*k candidates ordered by rank then local order.
  std::vector<Candidate> reduce_topk_gather(std::span<const Candidate> local, int root);

  void barrier();

  /// Closes the transport. Collectives and registered buffers are unusable
  /// afterwards.
  void shutdown();

 private:
  std::uint64_t begin_collective(const char* name);
  void check_root(int root) const;
  void reduce_in_place(std::span<float> values);
  void send(int dst, std::span<const std::byte> payload);
  void recv(int src, std::span<std::byte> out);

  int rank_ = 0;
  int world_size_ = 1;
  std::unique_ptr<Transport> transport_;
  CommStats stats_;
  std::uint64_t uid_ = 0;
  std::uint64_t collective_id_ = 0;
  std::uint64_t current_collective_ = 0;
  bool shut_down_ = false;
  std::deque<std::vector<float>> regions_;
  std::vector<float> staging_;
  std::vector<float> scratch_;
};

struct InProcessOptions {
  /// Zero waits forever. A positive value turns a receive that never
  /// completes (mismatched call sequences) into a TimeoutError.
  std::chrono::milliseconds recv_timeout{0};
};

/// One communicator per rank, sharing an in-memory transport. Each is meant
/// to be driven by its own thread.
std::vector<Communicator> create_in_process_group(int world_size, InProcessOptions options = {});

struct TcpOptions {
  /// Bound on establishing the whole mesh.
  std::chrono::milliseconds connect_timeout{10000};
  /// Zero blocks forever on a receive.
  std::chrono::milliseconds recv_timeout{0};
};

/// Joins a TCP full mesh as `rank`. Rank i listens on endpoints[i], accepts
/// every j > i and connects to every j < i; each link opens with a
/// handshake carrying (protocol_version, rank, world_size).
Communicator connect_tcp_group(int rank, int world_size, const std::vector<std::string>& endpoints,
                               TcpOptions options = {});

}  // namespace shardlm
