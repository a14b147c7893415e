#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace eckv {

/// stripe_list_id(2) | stripe_id(5) | chunk_position(1), big-endian.
struct ChunkId {
  std::uint16_t stripe_list = 0;
  std::uint64_t stripe = 0;  // 40 bits
  std::uint8_t position = 0;

  static constexpr std::uint64_t kMaxStripe = (1ull << 40) - 1;
  // Stripe value reserved for objects whose chunk has not been sealed yet.
  static constexpr std::uint64_t kUnsealedStripe = kMaxStripe;

  static constexpr std::size_t kSerializedSize = 8;

  bool unsealed() const { return stripe == kUnsealedStripe; }

  std::uint64_t packed() const {
    return (std::uint64_t{stripe_list} << 48) | ((stripe & kMaxStripe) << 8) | position;
  }
  static ChunkId unpack(std::uint64_t v) {
    return ChunkId{static_cast<std::uint16_t>(v >> 48), (v >> 8) & kMaxStripe,
                   static_cast<std::uint8_t>(v & 0xFF)};
  }
  std::array<std::uint8_t, kSerializedSize> serialize() const;
  static ChunkId deserialize(std::span<const std::uint8_t> bytes);

  /// Same stripe, different position.
  ChunkId with_position(int pos) const {
    return ChunkId{stripe_list, stripe, static_cast<std::uint8_t>(pos)};
  }

  std::string to_string() const;

  friend auto operator<=>(const ChunkId& a, const ChunkId& b) { return a.packed() <=> b.packed(); }
  friend bool operator==(const ChunkId& a, const ChunkId& b) { return a.packed() == b.packed(); }
};

struct Chunk {
  ChunkId id;
  std::vector<std::uint8_t> content;
  bool sealed = false;
  std::size_t used_bytes = 0;

  std::size_t free_bytes() const { return content.size() - used_bytes; }
};

}  // namespace eckv

template <>
struct std::hash<eckv::ChunkId> {
  std::size_t operator()(const eckv::ChunkId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.packed());
  }
};
