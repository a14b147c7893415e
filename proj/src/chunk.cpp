#include "eckv/chunk.hpp"

#include <stdexcept>

namespace eckv {

std::array<std::uint8_t, ChunkId::kSerializedSize> ChunkId::serialize() const {
  std::array<std::uint8_t, kSerializedSize> out{};
  std::uint64_t v = packed();
  for (int i = 7; i >= 0; --i) {
    out[i] = static_cast<std::uint8_t>(v & 0xFF);
    v >>= 8;
  }
  return out;
}

ChunkId ChunkId::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kSerializedSize) throw std::invalid_argument("chunk id needs 8 bytes");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < kSerializedSize; ++i) v = (v << 8) | bytes[i];
  return unpack(v);
}

std::string ChunkId::to_string() const {
  std::string s = "(" + std::to_string(stripe_list) + ",";
  s += unsealed() ? std::string("unsealed") : std::to_string(stripe);
  s += "," + std::to_string(position) + ")";
  return s;
}

}  // namespace eckv
