#include "eckv/gf256.hpp"

#include <array>
#include <cassert>

namespace eckv::gf256 {
namespace {

struct Tables {
  std::array<std::uint8_t, 512> exp{};
  std::array<int, 256> log{};
  // Full product table; one row per coefficient keeps region multiply to a
  // single lookup per byte.
  std::array<std::array<std::uint8_t, 256>, 256> product{};

  Tables() {
    unsigned x = 1;
    for (int i = 0; i < 255; ++i) {
      exp[i] = static_cast<std::uint8_t>(x);
      log[x] = i;
      x <<= 1;
      if (x & 0x100) x ^= kPolynomial;
    }
    for (int i = 255; i < 512; ++i) exp[i] = exp[i - 255];
    log[0] = -1;
    for (int a = 0; a < 256; ++a) {
      for (int b = 0; b < 256; ++b) {
        product[a][b] = (a == 0 || b == 0) ? 0 : exp[log[a] + log[b]];
      }
    }
  }
};

const Tables& tables() {
  static const Tables t;
  return t;
}

}  // namespace

std::uint8_t mul(std::uint8_t a, std::uint8_t b) { return tables().product[a][b]; }

std::uint8_t div(std::uint8_t a, std::uint8_t b) {
  assert(b != 0);
  if (a == 0) return 0;
  const auto& t = tables();
  return t.exp[t.log[a] + 255 - t.log[b]];
}

std::uint8_t inv(std::uint8_t a) { return div(1, a); }

void mul_add_region(std::uint8_t coeff, std::span<const std::uint8_t> src,
                    std::span<std::uint8_t> dst) {
  assert(src.size() == dst.size());
  if (coeff == 0) return;
  if (coeff == 1) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] ^= src[i];
    return;
  }
  const auto& row = tables().product[coeff];
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] ^= row[src[i]];
}

}  // namespace eckv::gf256
