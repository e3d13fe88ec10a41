// Copyright (C) 2026 The shardlm Authors
// SPDX-License-Identifier: Apache-2.0

// TCP frame layout, little-endian, 25-byte header:
//   u32 magic (bytes 31 43 43 4C) | u8 msg_type | u64 collective_id |
//   u16 src_rank | u16 dst_rank | u64 payload_len | payload
// Handshake payload: u16 protocol_version | u16 rank | u16 world_size.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace shardlm::wire {

inline constexpr std::uint32_t kFrameMagic = 0x4C434331;
inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::size_t kHeaderSize = 25;
inline constexpr std::size_t kHandshakeSize = 6;

enum class MessageType : std::uint8_t { Handshake = 1, Payload = 2 };

struct FrameHeader {
  std::uint32_t magic = kFrameMagic;
  std::uint8_t msg_type = static_cast<std::uint8_t>(MessageType::Payload);
  std::uint64_t collective_id = 0;
  std::uint16_t src_rank = 0;
  std::uint16_t dst_rank = 0;
  std::uint64_t payload_len = 0;
};

struct Handshake {
  std::uint16_t protocol_version = kProtocolVersion;
  std::uint16_t rank = 0;
  std::uint16_t world_size = 0;
};

std::array<std::byte, kHeaderSize> encode(const FrameHeader& h);
FrameHeader decode_header(std::span<const std::byte, kHeaderSize> bytes);

std::array<std::byte, kHandshakeSize> encode(const Handshake& h);
Handshake decode_handshake(std::span<const std::byte, kHandshakeSize> bytes);

/// Candidates travel as u32 index + f32 value.
inline constexpr std::size_t kCandidateSize = 8;

}  // namespace shardlm::wire
