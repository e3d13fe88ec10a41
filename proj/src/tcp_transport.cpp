// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/uio.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "shardlm/collectives.hpp"
#include "shardlm/wire.hpp"

namespace shardlm {

namespace {

using Clock = std::chrono::steady_clock;

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

std::string errno_text() { return std::strerror(errno); }

struct Endpoint {
  std::string host;
  std::string port;
};

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw ArgumentError("endpoint '" + text + "' is not host:port");
  }
  return {text.substr(0, colon), text.substr(colon + 1)};
}

sockaddr_in resolve(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(ep.host.c_str(), ep.port.c_str(), &hints, &res); rc != 0) {
    throw ArgumentError("cannot resolve " + ep.host + ":" + ep.port + ": " + gai_strerror(rc));
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  return addr;
}

std::chrono::milliseconds remaining(Clock::time_point deadline) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
}

void set_recv_timeout(int fd, std::chrono::milliseconds timeout) {
  timeval tv{};
  if (timeout.count() > 0) {
    tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  }
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

// Reads up to out.size() bytes; returns fewer only at end of stream.
std::size_t read_fully(int fd, std::span<std::byte> out) {
  std::size_t got = 0;
  while (got < out.size()) {
    const ssize_t n = ::recv(fd, out.data() + got, out.size() - got, 0);
    if (n > 0) {
      got += static_cast<std::size_t>(n);
    } else if (n == 0) {
      break;
    } else if (errno == EINTR) {
      continue;
    } else if (errno == EAGAIN || errno == EWOULDBLOCK) {
      throw TimeoutError("socket receive timed out");
    } else {
      throw CommError("socket receive failed: " + errno_text());
    }
  }
  return got;
}

void write_fully(int fd, std::span<const std::byte> head, std::span<const std::byte> body) {
  iovec iov[2] = {{const_cast<std::byte*>(head.data()), head.size()},
                  {const_cast<std::byte*>(body.data()), body.size()}};
  int first = 0;
  const int count = body.empty() ? 1 : 2;
  while (first < count) {
    msghdr msg{};
    msg.msg_iov = iov + first;
    msg.msg_iovlen = static_cast<std::size_t>(count - first);
    ssize_t n = ::sendmsg(fd, &msg, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw CommError("socket send failed: " + errno_text());
    }
    auto left = static_cast<std::size_t>(n);
    while (first < count && left >= iov[first].iov_len) {
      left -= iov[first].iov_len;
      ++first;
    }
    if (first < count) {
      iov[first].iov_base = static_cast<char*>(iov[first].iov_base) + left;
      iov[first].iov_len -= left;
    }
  }
}

wire::FrameHeader read_header(int fd, int peer) {
  std::array<std::byte, wire::kHeaderSize> raw{};
  const std::size_t got = read_fully(fd, raw);
  if (got == 0) throw ProtocolError("connection to rank " + std::to_string(peer) + " closed");
  if (got < raw.size()) {
    throw TruncatedFrameError("frame header from rank " + std::to_string(peer) +
                              " truncated after " + std::to_string(got) + " bytes");
  }
  wire::FrameHeader h = wire::decode_header(raw);
  if (h.magic != wire::kFrameMagic) {
    throw FrameMagicError("bad frame magic from rank " + std::to_string(peer));
  }
  return h;
}

void send_handshake(int fd, int rank, int peer, int world_size) {
  const auto payload = wire::encode(wire::Handshake{wire::kProtocolVersion,
                                                    static_cast<std::uint16_t>(rank),
                                                    static_cast<std::uint16_t>(world_size)});
  wire::FrameHeader h;
  h.msg_type = static_cast<std::uint8_t>(wire::MessageType::Handshake);
  h.src_rank = static_cast<std::uint16_t>(rank);
  h.dst_rank = static_cast<std::uint16_t>(peer);
  h.payload_len = payload.size();
  write_fully(fd, wire::encode(h), payload);
}

wire::Handshake read_handshake(int fd, int world_size) {
  const wire::FrameHeader h = read_header(fd, -1);
  if (h.msg_type != static_cast<std::uint8_t>(wire::MessageType::Handshake) ||
      h.payload_len != wire::kHandshakeSize) {
    throw ProtocolError("expected a handshake frame");
  }
  std::array<std::byte, wire::kHandshakeSize> raw{};
  if (read_fully(fd, raw) != raw.size()) throw TruncatedFrameError("handshake payload truncated");
  const wire::Handshake hs = wire::decode_handshake(raw);
  if (hs.protocol_version != wire::kProtocolVersion) {
    throw VersionMismatchError("peer speaks protocol version " +
                               std::to_string(hs.protocol_version) + ", expected " +
                               std::to_string(wire::kProtocolVersion));
  }
  if (hs.world_size != world_size) {
    throw ProtocolError("peer believes world_size=" + std::to_string(hs.world_size) +
                        ", expected " + std::to_string(world_size));
  }
  return hs;
}

Fd listen_on(const Endpoint& ep, int backlog) {
  const sockaddr_in addr = resolve(ep);
  Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (!fd.valid()) throw CommError("socket() failed: " + errno_text());
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw CommError("cannot bind " + ep.host + ":" + ep.port + ": " + errno_text());
  }
  if (::listen(fd.get(), backlog) != 0) throw CommError("listen failed: " + errno_text());
  return fd;
}

Fd connect_with_retry(const Endpoint& ep, Clock::time_point deadline) {
  const sockaddr_in addr = resolve(ep);
  while (true) {
    Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (!fd.valid()) throw CommError("socket() failed: " + errno_text());
    const int flags = ::fcntl(fd.get(), F_GETFL, 0);
    ::fcntl(fd.get(), F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd p{fd.get(), POLLOUT, 0};
      const auto wait = std::max<long>(1, remaining(deadline).count());
      if (::poll(&p, 1, static_cast<int>(wait)) == 1) {
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
      }
    }
    if (rc == 0) {
      ::fcntl(fd.get(), F_SETFL, flags);
      set_nodelay(fd.get());
      return fd;
    }
    if (Clock::now() >= deadline) {
      throw ConnectTimeoutError("timed out connecting to " + ep.host + ":" + ep.port);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

class TcpTransport final : public Transport {
 public:
  TcpTransport(int rank, std::vector<Fd> peers) : rank_(rank), peers_(std::move(peers)) {}

  TransportKind kind() const override { return TransportKind::Tcp; }

  void send(int dst, std::uint64_t collective_id, std::span<const std::byte> payload) override {
    wire::FrameHeader h;
    h.collective_id = collective_id;
    h.src_rank = static_cast<std::uint16_t>(rank_);
    h.dst_rank = static_cast<std::uint16_t>(dst);
    h.payload_len = payload.size();
    write_fully(peer(dst), wire::encode(h), payload);
  }

  void recv(int src, std::uint64_t collective_id, std::span<std::byte> out) override {
    const int fd = peer(src);
    const wire::FrameHeader h = read_header(fd, src);
    if (h.msg_type != static_cast<std::uint8_t>(wire::MessageType::Payload)) {
      throw ProtocolError("unexpected message type " + std::to_string(h.msg_type) +
                          " from rank " + std::to_string(src));
    }
    if (h.collective_id != collective_id) {
      throw ProtocolError("collective sequence mismatch: rank " + std::to_string(rank_) +
                          " expected collective " + std::to_string(collective_id) +
                          " from rank " + std::to_string(src) + ", got " +
                          std::to_string(h.collective_id));
    }
    if (h.src_rank != src || h.dst_rank != rank_) {
      throw ProtocolError("misaddressed frame " + std::to_string(h.src_rank) + "->" +
                          std::to_string(h.dst_rank));
    }
    if (h.payload_len != out.size()) {
      throw ProtocolError("payload length mismatch from rank " + std::to_string(src) +
                          ": expected " + std::to_string(out.size()) + " bytes, got " +
                          std::to_string(h.payload_len));
    }
    const std::size_t got = read_fully(fd, out);
    if (got != out.size()) {
      throw TruncatedFrameError("payload from rank " + std::to_string(src) + " truncated at " +
                                std::to_string(got) + " of " + std::to_string(out.size()) +
                                " bytes");
    }
  }

  void close() override {
    for (auto& fd : peers_) fd.reset();
  }

 private:
  int peer(int r) const {
    const Fd& fd = peers_.at(static_cast<std::size_t>(r));
    if (!fd.valid()) throw LifecycleError("no open link to rank " + std::to_string(r));
    return fd.get();
  }

  int rank_;
  std::vector<Fd> peers_;
};

}  // namespace

Communicator connect_tcp_group(int rank, int world_size, const std::vector<std::string>& endpoints,
                               TcpOptions options) {
  if (world_size < 1 || world_size > 0xFFFF) {
    throw ArgumentError("world_size must be in [1, 65535]");
  }
  if (endpoints.size() != static_cast<std::size_t>(world_size)) {
    throw ArgumentError("expected " + std::to_string(world_size) + " endpoints, got " +
                        std::to_string(endpoints.size()));
  }
  if (rank < 0 || rank >= world_size) {
    throw ArgumentError("rank " + std::to_string(rank) + " outside world of size " +
                        std::to_string(world_size));
  }
  std::vector<Endpoint> eps;
  for (const auto& e : endpoints) eps.push_back(parse_endpoint(e));

  const auto deadline = Clock::now() + options.connect_timeout;
  auto handshake_timeout = [&] {
    return std::max(std::chrono::milliseconds(1), remaining(deadline));
  };
  std::vector<Fd> peers(static_cast<std::size_t>(world_size));

  Fd listener;
  if (rank < world_size - 1) listener = listen_on(eps[static_cast<std::size_t>(rank)], world_size);

  try {
    for (int j = 0; j < rank; ++j) {
      Fd fd = connect_with_retry(eps[static_cast<std::size_t>(j)], deadline);
      send_handshake(fd.get(), rank, j, world_size);
      set_recv_timeout(fd.get(), handshake_timeout());
      const wire::Handshake hs = read_handshake(fd.get(), world_size);
      if (hs.rank != j) {
        throw ProtocolError("endpoint " + endpoints[static_cast<std::size_t>(j)] +
                            " answered as rank " + std::to_string(hs.rank) + ", expected " +
                            std::to_string(j));
      }
      peers[static_cast<std::size_t>(j)] = std::move(fd);
    }

    for (int accepted = 0; accepted < world_size - 1 - rank; ++accepted) {
      pollfd p{listener.get(), POLLIN, 0};
      const auto wait = remaining(deadline).count();
      if (wait <= 0 || ::poll(&p, 1, static_cast<int>(wait)) != 1) {
        throw ConnectTimeoutError("rank " + std::to_string(rank) + " timed out waiting for " +
                                  std::to_string(world_size - 1 - rank - accepted) +
                                  " higher-ranked peers");
      }
      Fd fd(::accept(listener.get(), nullptr, nullptr));
      if (!fd.valid()) throw CommError("accept failed: " + errno_text());
      set_nodelay(fd.get());
      set_recv_timeout(fd.get(), handshake_timeout());
      const wire::Handshake hs = read_handshake(fd.get(), world_size);
      if (hs.rank <= rank || hs.rank >= world_size) {
        throw ProtocolError("rank " + std::to_string(rank) + " accepted a peer claiming rank " +
                            std::to_string(hs.rank));
      }
      if (peers[hs.rank].valid()) {
        throw DuplicateRankError("two peers claim rank " + std::to_string(hs.rank));
      }
      send_handshake(fd.get(), rank, hs.rank, world_size);
      peers[hs.rank] = std::move(fd);
    }
  } catch (const TimeoutError& e) {
    throw ConnectTimeoutError(std::string("mesh setup timed out: ") + e.what());
  }

  for (auto& fd : peers) {
    if (fd.valid()) set_recv_timeout(fd.get(), options.recv_timeout);
  }
  return Communicator(rank, world_size, std::make_unique<TcpTransport>(rank, std::move(peers)));
}

}  // namespace shardlm
