#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace eckv {

// Fixed seeds; every node must agree on them.
inline constexpr std::uint64_t kIndexSeedPrimary = 0x9E3779B97F4A7C15ull;
inline constexpr std::uint64_t kIndexSeedAlternate = 0xC2B2AE3D27D4EB4Full;
inline constexpr std::uint64_t kStripeListSeed = 0x165667B19E3779F9ull;
inline constexpr std::uint64_t kDataServerSeed = 0x27D4EB2F165667C5ull;

std::uint64_t hash64(std::span<const std::uint8_t> bytes, std::uint64_t seed);
std::uint64_t hash64(std::string_view bytes, std::uint64_t seed);
std::uint64_t hash64(std::uint64_t value, std::uint64_t seed);

}  // namespace eckv
