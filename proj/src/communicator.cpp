// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <bit>
#include <condition_variable>
#include <cstring>
#include <mutex>

#include "shardlm/collectives.hpp"
#include "shardlm/wire.hpp"

namespace shardlm {

static_assert(std::endian::native == std::endian::little,
              "payloads are sent in host byte order and must be little-endian");

std::string to_string(TransportKind kind) {
  return kind == TransportKind::InProcess ? "inproc" : "tcp";
}

namespace {

std::atomic<std::uint64_t> next_uid{1};

std::span<const std::byte> bytes_of(std::span<const float> v) { return std::as_bytes(v); }
std::span<std::byte> bytes_of(std::span<float> v) { return std::as_writable_bytes(v); }

}  // namespace

Communicator::Communicator(int rank, int world_size, std::unique_ptr<Transport> transport)
    : rank_(rank), world_size_(world_size), transport_(std::move(transport)), uid_(next_uid++) {
  if (world_size < 1) throw ArgumentError("world_size must be at least 1");
  if (rank < 0 || rank >= world_size) {
    throw ArgumentError("rank " + std::to_string(rank) + " outside world of size " +
                        std::to_string(world_size));
  }
  if (!transport_) throw ArgumentError("communicator needs a transport");
}

Communicator::Communicator(Communicator&&) noexcept = default;
Communicator& Communicator::operator=(Communicator&&) noexcept = default;

Communicator::~Communicator() {
  if (transport_ && !shut_down_) transport_->close();
}

TransportKind Communicator::transport() const { return transport_->kind(); }

std::uint64_t Communicator::begin_collective(const char* name) {
  if (shut_down_) throw LifecycleError(std::string(name) + " on a shut-down communicator");
  ++stats_.sync_points;
  current_collective_ = ++collective_id_;
  return current_collective_;
}

void Communicator::check_root(int root) const {
  if (root < 0 || root >= world_size_) {
    throw ArgumentError("root " + std::to_string(root) + " outside world of size " +
                        std::to_string(world_size_));
  }
}

void Communicator::send(int dst, std::span<const std::byte> payload) {
  transport_->send(dst, current_collective_, payload);
  stats_.wire_bytes_sent += payload.size();
  ++stats_.messages_sent;
}

void Communicator::recv(int src, std::span<std::byte> out) {
  transport_->recv(src, current_collective_, out);
  stats_.wire_bytes_received += out.size();
}

void Communicator::broadcast(std::span<std::byte> buffer, int root) {
  check_root(root);
  begin_collective("broadcast");
  if (rank_ == root) {
    for (int r = 0; r < world_size_; ++r) {
      if (r != root) send(r, buffer);
    }
  } else {
    recv(root, buffer);
  }
}

void Communicator::reduce_in_place(std::span<float> values) {
  if (world_size_ == 1) return;
  if (rank_ == 0) {
    scratch_.resize(values.size());
    for (int r = 1; r < world_size_; ++r) {
      recv(r, bytes_of(std::span<float>(scratch_)));
      for (std::size_t i = 0; i < values.size(); ++i) values[i] += scratch_[i];
    }
    for (int r = 1; r < world_size_; ++r) send(r, bytes_of(std::span<const float>(values)));
  } else {
    send(0, bytes_of(std::span<const float>(values)));
    recv(0, bytes_of(values));
  }
}

void Communicator::all_reduce_sum(std::span<float> buffer) {
  begin_collective("all_reduce_sum");
  staging_.assign(buffer.begin(), buffer.end());
  stats_.copied_bytes += buffer.size_bytes();
  reduce_in_place(staging_);
  std::memcpy(buffer.data(), staging_.data(), buffer.size_bytes());
  stats_.copied_bytes += buffer.size_bytes();
}

RegisteredBuffer Communicator::register_buffer(std::size_t length_bytes) {
  if (shut_down_) throw LifecycleError("register_buffer on a shut-down communicator");
  if (length_bytes == 0 || length_bytes % sizeof(float) != 0) {
    throw ArgumentError("registered length must be a positive multiple of 4 bytes, got " +
                        std::to_string(length_bytes));
  }
  regions_.emplace_back(length_bytes / sizeof(float), 0.0f);
  return RegisteredBuffer{uid_, static_cast<std::uint32_t>(regions_.size() - 1), length_bytes};
}

std::span<float> Communicator::region(const RegisteredBuffer& buffer) {
  if (shut_down_) throw LifecycleError("registered buffer used after communicator shutdown");
  if (buffer.owner != uid_ || buffer.id >= regions_.size() ||
      regions_[buffer.id].size() * sizeof(float) != buffer.length_bytes) {
    throw LifecycleError("registered buffer does not belong to this communicator");
  }
  return regions_[buffer.id];
}

void Communicator::all_reduce_sum_registered(const RegisteredBuffer& buffer) {
  std::span<float> values = region(buffer);
  begin_collective("all_reduce_sum_registered");
  reduce_in_place(values);
}

std::vector<std::byte> Communicator::gather_bytes(std::span<const std::byte> buffer, int root) {
  check_root(root);
  begin_collective("gather");
  if (rank_ != root) {
    send(root, buffer);
    return {};
  }
  const std::size_t len = buffer.size();
  std::vector<std::byte> out(len * static_cast<std::size_t>(world_size_));
  for (int r = 0; r < world_size_; ++r) {
    std::span<std::byte> slot(out.data() + static_cast<std::size_t>(r) * len, len);
    if (r == root) {
      std::copy(buffer.begin(), buffer.end(), slot.begin());
    } else {
      recv(r, slot);
    }
  }
  return out;
}

std::vector<float> Communicator::gather(std::span<const float> buffer, int root) {
  const std::vector<std::byte> bytes = gather_bytes(bytes_of(buffer), root);
  std::vector<float> out(bytes.size() / sizeof(float));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::vector<Candidate> Communicator::reduce_topk_gather(std::span<const Candidate> local,
                                                        int root) {
  std::vector<std::byte> packed(local.size() * wire::kCandidateSize);
  for (std::size_t i = 0; i < local.size(); ++i) {
    std::memcpy(packed.data() + i * wire::kCandidateSize, &local[i].index, 4);
    std::memcpy(packed.data() + i * wire::kCandidateSize + 4, &local[i].value, 4);
  }
  const std::vector<std::byte> all = gather_bytes(packed, root);
  std::vector<Candidate> out(all.size() / wire::kCandidateSize);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::memcpy(&out[i].index, all.data() + i * wire::kCandidateSize, 4);
    std::memcpy(&out[i].value, all.data() + i * wire::kCandidateSize + 4, 4);
  }
  return out;
}

void Communicator::barrier() {
  begin_collective("barrier");
  if (world_size_ == 1) return;
  if (rank_ == 0) {
    for (int r = 1; r < world_size_; ++r) recv(r, {});
    for (int r = 1; r < world_size_; ++r) send(r, {});
  } else {
    send(0, {});
    recv(0, {});
  }
}

void Communicator::shutdown() {
  if (shut_down_) return;
  transport_->close();
  shut_down_ = true;
  regions_.clear();
}

// In-process transport: one mailbox per destination rank with a FIFO per
// source rank.

namespace {

struct Message {
  std::uint64_t collective_id;
  std::vector<std::byte> bytes;
};

struct Mailbox {
  std::mutex mutex;
  std::condition_variable ready;
  std::vector<std::deque<Message>> from;
};

struct Hub {
  explicit Hub(int world_size) {
    for (int i = 0; i < world_size; ++i) {
      auto box = std::make_unique<Mailbox>();
      box->from.resize(static_cast<std::size_t>(world_size));
      boxes.push_back(std::move(box));
    }
  }
  std::vector<std::unique_ptr<Mailbox>> boxes;
};

class InProcessTransport final : public Transport {
 public:
  InProcessTransport(std::shared_ptr<Hub> hub, int rank, InProcessOptions options)
      : hub_(std::move(hub)), rank_(rank), options_(options) {}

  TransportKind kind() const override { return TransportKind::InProcess; }

  void send(int dst, std::uint64_t collective_id, std::span<const std::byte> payload) override {
    Mailbox& box = *hub_->boxes.at(static_cast<std::size_t>(dst));
    {
      std::lock_guard lock(box.mutex);
      box.from[static_cast<std::size_t>(rank_)].push_back(
          Message{collective_id, std::vector<std::byte>(payload.begin(), payload.end())});
    }
    box.ready.notify_all();
  }

  void recv(int src, std::uint64_t collective_id, std::span<std::byte> out) override {
    Mailbox& box = *hub_->boxes[static_cast<std::size_t>(rank_)];
    auto& queue = box.from.at(static_cast<std::size_t>(src));
    std::unique_lock lock(box.mutex);
    auto has_message = [&] { return !queue.empty(); };
    if (options_.recv_timeout.count() > 0) {
      if (!box.ready.wait_for(lock, options_.recv_timeout, has_message)) {
        throw TimeoutError("rank " + std::to_string(rank_) + " timed out waiting for rank " +
                           std::to_string(src) + " in collective " +
                           std::to_string(collective_id));
      }
    } else {
      box.ready.wait(lock, has_message);
    }
    Message msg = std::move(queue.front());
    queue.pop_front();
    lock.unlock();

    if (msg.collective_id != collective_id) {
      throw ProtocolError("collective sequence mismatch: rank " + std::to_string(rank_) +
                          " expected collective " + std::to_string(collective_id) +
                          " from rank " + std::to_string(src) + ", got " +
                          std::to_string(msg.collective_id));
    }
    if (msg.bytes.size() != out.size()) {
      throw ProtocolError("payload length mismatch from rank " + std::to_string(src) +
                          ": expected " + std::to_string(out.size()) + " bytes, got " +
                          std::to_string(msg.bytes.size()));
    }
    std::copy(msg.bytes.begin(), msg.bytes.end(), out.begin());
  }

  void close() override {}

 private:
  std::shared_ptr<Hub> hub_;
  int rank_;
  InProcessOptions options_;
};

}  // namespace

std::vector<Communicator> create_in_process_group(int world_size, InProcessOptions options) {
  if (world_size < 1) throw ArgumentError("world_size must be at least 1");
  auto hub = std::make_shared<Hub>(world_size);
  std::vector<Communicator> group;
  group.reserve(static_cast<std::size_t>(world_size));
  for (int r = 0; r < world_size; ++r) {
    group.emplace_back(r, world_size, std::make_unique<InProcessTransport>(hub, r, options));
  }
  return group;
}

}  // namespace shardlm
