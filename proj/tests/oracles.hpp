#pragma once
// Reference implementations the library is checked against. They share no
// code with src/.

#include <cstdint>
#include <vector>

namespace oracle {

// Shift-and-add multiply in GF(2^8) reduced by x^8+x^4+x^3+x^2+1.
inline std::uint8_t gf_mul_bitwise(std::uint8_t a, std::uint8_t b) {
  unsigned acc = 0;
  unsigned x = a;
  for (int i = 0; i < 8; ++i) {
    if (b & (1u << i)) acc ^= x;
    x <<= 1;
    if (x & 0x100) x ^= 0x11D;
  }
  return static_cast<std::uint8_t>(acc);
}

// Log/antilog tables built from the generator 2.
struct GfTables {
  std::uint8_t exp[512];
  int log[256];
  GfTables() {
    unsigned v = 1;
    for (int i = 0; i < 255; ++i) {
      exp[i] = static_cast<std::uint8_t>(v);
      log[v] = i;
      v <<= 1;
      if (v & 0x100) v ^= 0x11D;
    }
    for (int i = 255; i < 512; ++i) exp[i] = exp[i - 255];
    log[0] = -1;
  }
  std::uint8_t mul(std::uint8_t a, std::uint8_t b) const {
    if (!a || !b) return 0;
    return exp[log[a] + log[b]];
  }
};

inline const GfTables& tables() {
  static const GfTables t;
  return t;
}

// parity[p][i] = sum_d coeff[p][d] * data[d][i]
inline std::vector<std::vector<std::uint8_t>> matrix_encode(
    const std::vector<std::vector<std::uint8_t>>& coeff, const std::vector<std::vector<std::uint8_t>>& data) {
  std::vector<std::vector<std::uint8_t>> out(coeff.size(), std::vector<std::uint8_t>(data.at(0).size(), 0));
  for (std::size_t p = 0; p < coeff.size(); ++p) {
    for (std::size_t d = 0; d < data.size(); ++d) {
      for (std::size_t i = 0; i < data[d].size(); ++i) out[p][i] ^= tables().mul(coeff[p][d], data[d][i]);
    }
  }
  return out;
}

}  // namespace oracle
