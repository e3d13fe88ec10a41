// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

#include "shardlm/wire.hpp"

namespace shardlm::wire {

namespace {

template <typename T>
void put_le(std::byte* at, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    at[i] = static_cast<std::byte>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  }
}

template <typename T>
T get_le(const std::byte* at) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(at[i]) << (8 * i);
  }
  return static_cast<T>(v);
}

}  // namespace

std::array<std::byte, kHeaderSize> encode(const FrameHeader& h) {
  std::array<std::byte, kHeaderSize> out{};
  put_le(out.data() + 0, h.magic);
  put_le(out.data() + 4, h.msg_type);
  put_le(out.data() + 5, h.collective_id);
  put_le(out.data() + 13, h.src_rank);
  put_le(out.data() + 15, h.dst_rank);
  put_le(out.data() + 17, h.payload_len);
  return out;
}

FrameHeader decode_header(std::span<const std::byte, kHeaderSize> b) {
  FrameHeader h;
  h.magic = get_le<std::uint32_t>(b.data() + 0);
  h.msg_type = get_le<std::uint8_t>(b.data() + 4);
  h.collective_id = get_le<std::uint64_t>(b.data() + 5);
  h.src_rank = get_le<std::uint16_t>(b.data() + 13);
  h.dst_rank = get_le<std::uint16_t>(b.data() + 15);
  h.payload_len = get_le<std::uint64_t>(b.data() + 17);
  return h;
}

std::array<std::byte, kHandshakeSize> encode(const Handshake& h) {
  std::array<std::byte, kHandshakeSize> out{};
  put_le(out.data() + 0, h.protocol_version);
  put_le(out.data() + 2, h.rank);
  put_le(out.data() + 4, h.world_size);
  return out;
}

Handshake decode_handshake(std::span<const std::byte, kHandshakeSize> b) {
  return {get_le<std::uint16_t>(b.data() + 0), get_le<std::uint16_t>(b.data() + 2),
          get_le<std::uint16_t>(b.data() + 4)};
}

}  // namespace shardlm::wire
