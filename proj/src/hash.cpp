#include "eckv/hash.hpp"

namespace eckv {
namespace {

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

// FNV-1a over the bytes, seeded through the offset basis, then a splitmix64
// finalizer to spread the low-entropy FNV state.
std::uint64_t hash64(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
  std::uint64_t h = 0xCBF29CE484222325ull ^ mix(seed);
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001B3ull;
  }
  return mix(h ^ (bytes.size() * 0x9E3779B97F4A7C15ull));
}

std::uint64_t hash64(std::string_view bytes, std::uint64_t seed) {
  return hash64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()),
                                              bytes.size()),
                seed);
}

std::uint64_t hash64(std::uint64_t value, std::uint64_t seed) { return mix(value ^ mix(seed)); }

}  // namespace eckv
