#pragma once

#include <cstdint>
#include <span>

namespace eckv::gf256 {

// GF(2^8) with primitive polynomial x^8 + x^4 + x^3 + x^2 + 1 (0x11D).
inline constexpr unsigned kPolynomial = 0x11D;

std::uint8_t mul(std::uint8_t a, std::uint8_t b);
std::uint8_t div(std::uint8_t a, std::uint8_t b);  // b != 0
std::uint8_t inv(std::uint8_t a);                  // a != 0
inline std::uint8_t add(std::uint8_t a, std::uint8_t b) { return a ^ b; }

/// dst[i] ^= coeff * src[i] for every byte. Lengths must match.
void mul_add_region(std::uint8_t coeff, std::span<const std::uint8_t> src,
                    std::span<std::uint8_t> dst);

}  // namespace eckv::gf256
