#include "eckv/erasure_codec.hpp"

#include <algorithm>

#include "eckv/gf256.hpp"

namespace eckv {

void CodeConfig::validate() const {
  if (k <= 0 || k >= n) {
    throw CodecError(CodecError::Kind::config, "code requires 0 < k < n");
  }
  if (scheme == CodeScheme::reed_solomon && n > 255) {
    throw CodecError(CodecError::Kind::config, "reed_solomon over GF(2^8) requires n <= 255");
  }
  if (scheme == CodeScheme::single_parity_xor && n != k + 1) {
    throw CodecError(CodecError::Kind::config, "single_parity_xor requires n = k + 1");
  }
}

ErasureCodec::ErasureCodec(CodeConfig config) : config_(config) {
  config_.validate();
  const int m = config_.parity_count();
  parity_rows_.assign(m, std::vector<std::uint8_t>(config_.k, 1));
  if (config_.scheme == CodeScheme::reed_solomon) {
    // Cauchy entries 1 / (x_p + y_d) with x_p = k + p and y_d = d; all x and
    // y are distinct, so every square submatrix is invertible.
    for (int p = 0; p < m; ++p) {
      for (int d = 0; d < config_.k; ++d) {
        const auto x = static_cast<std::uint8_t>(config_.k + p);
        const auto y = static_cast<std::uint8_t>(d);
        parity_rows_[p][d] = gf256::inv(gf256::add(x, y));
      }
    }
  }
}

void ErasureCodec::check_position(int position) const {
  if (position < 0 || position >= config_.n) {
    throw CodecError(CodecError::Kind::position,
                     "chunk position " + std::to_string(position) + " out of range");
  }
}

std::uint8_t ErasureCodec::coefficient(int parity_position, int data_position) const {
  check_position(parity_position);
  check_position(data_position);
  if (parity_position < config_.k || data_position >= config_.k) {
    throw CodecError(CodecError::Kind::position, "invalid parity/data position pair");
  }
  return parity_rows_[parity_position - config_.k][data_position];
}

std::vector<ChunkBuffer> ErasureCodec::encode(std::span<const ChunkBuffer> data) const {
  if (static_cast<int>(data.size()) != config_.k) {
    throw CodecError(CodecError::Kind::insufficient_chunks, "encode needs exactly k data chunks");
  }
  const std::size_t len = data.front().size();
  for (const auto& d : data) {
    if (d.size() != len) throw CodecError(CodecError::Kind::length, "mismatched chunk lengths");
  }
  std::vector<ChunkBuffer> parity(config_.parity_count(), ChunkBuffer(len, 0));
  for (int p = 0; p < config_.parity_count(); ++p) {
    for (int d = 0; d < config_.k; ++d) {
      gf256::mul_add_region(parity_rows_[p][d], data[d], parity[p]);
    }
  }
  return parity;
}

std::vector<ChunkBuffer> ErasureCodec::decode(const std::map<int, ChunkBuffer>& available) const {
  const int k = config_.k;
  for (const auto& [pos, _] : available) check_position(pos);
  if (static_cast<int>(available.size()) < k) {
    throw CodecError(CodecError::Kind::insufficient_chunks,
                     "need " + std::to_string(k) + " chunks, have " +
                         std::to_string(available.size()));
  }
  const std::size_t len = available.begin()->second.size();
  for (const auto& [_, buf] : available) {
    if (buf.size() != len) throw CodecError(CodecError::Kind::length, "mismatched chunk lengths");
  }

  std::vector<ChunkBuffer> out(k);
  std::vector<int> missing;
  for (int d = 0; d < k; ++d) {
    if (auto it = available.find(d); it != available.end()) {
      out[d] = it->second;
    } else {
      missing.push_back(d);
    }
  }
  if (missing.empty()) return out;

  // Rows of the generator matrix for the first k available positions.
  std::vector<int> chosen;
  for (const auto& [pos, _] : available) {
    if (static_cast<int>(chosen.size()) == k) break;
    chosen.push_back(pos);
  }
  std::vector<std::vector<std::uint8_t>> a(k, std::vector<std::uint8_t>(2 * k, 0));
  for (int r = 0; r < k; ++r) {
    const int pos = chosen[r];
    for (int c = 0; c < k; ++c) {
      a[r][c] = pos < k ? (pos == c ? 1 : 0) : parity_rows_[pos - k][c];
    }
    a[r][k + r] = 1;
  }
  // Gauss-Jordan elimination; the augmented half becomes the inverse.
  for (int col = 0; col < k; ++col) {
    int pivot = col;
    while (pivot < k && a[pivot][col] == 0) ++pivot;
    if (pivot == k) {
      throw CodecError(CodecError::Kind::insufficient_chunks, "singular decoding matrix");
    }
    std::swap(a[pivot], a[col]);
    const std::uint8_t scale = gf256::inv(a[col][col]);
    for (auto& v : a[col]) v = gf256::mul(v, scale);
    for (int r = 0; r < k; ++r) {
      if (r == col || a[r][col] == 0) continue;
      const std::uint8_t f = a[r][col];
      for (int c = 0; c < 2 * k; ++c) a[r][c] ^= gf256::mul(f, a[col][c]);
    }
  }
  for (int d : missing) {
    out[d].assign(len, 0);
    for (int r = 0; r < k; ++r) {
      gf256::mul_add_region(a[d][k + r], available.at(chosen[r]), out[d]);
    }
  }
  return out;
}

void ErasureCodec::apply_delta_in_place(ChunkBuffer& parity, int parity_position,
                                        int data_position, const DataDelta& delta) const {
  const std::uint8_t coeff = coefficient(parity_position, data_position);
  if (delta.offset > parity.size() || delta.bytes.size() > parity.size() - delta.offset) {
    throw CodecError(CodecError::Kind::bounds, "delta region exceeds chunk");
  }
  gf256::mul_add_region(coeff, delta.bytes,
                        std::span<std::uint8_t>(parity).subspan(delta.offset, delta.bytes.size()));
}

ChunkBuffer ErasureCodec::apply_delta(const ChunkBuffer& parity, int parity_position,
                                      int data_position, const DataDelta& delta) const {
  ChunkBuffer out = parity;
  apply_delta_in_place(out, parity_position, data_position, delta);
  return out;
}

std::vector<ChunkBuffer> encode_stripe(const CodeConfig& config, std::span<const ChunkBuffer> data) {
  return ErasureCodec(config).encode(data);
}

std::vector<ChunkBuffer> decode_stripe(const CodeConfig& config,
                                       const std::map<int, ChunkBuffer>& available) {
  return ErasureCodec(config).decode(available);
}

ChunkBuffer apply_delta(const CodeConfig& config, const ChunkBuffer& parity, int parity_position,
                        int data_position, const DataDelta& delta) {
  return ErasureCodec(config).apply_delta(parity, parity_position, data_position, delta);
}

DataDelta compute_delta(std::span<const std::uint8_t> old_region,
                        std::span<const std::uint8_t> new_region, std::size_t offset) {
  if (old_region.size() != new_region.size()) {
    throw CodecError(CodecError::Kind::length, "delta regions differ in length");
  }
  DataDelta delta{offset, std::vector<std::uint8_t>(old_region.size())};
  for (std::size_t i = 0; i < old_region.size(); ++i) delta.bytes[i] = old_region[i] ^ new_region[i];
  return delta;
}

void xor_delta_into(std::span<std::uint8_t> target, const DataDelta& delta) {
  if (delta.offset > target.size() || delta.bytes.size() > target.size() - delta.offset) {
    throw CodecError(CodecError::Kind::bounds, "delta region exceeds target");
  }
  for (std::size_t i = 0; i < delta.bytes.size(); ++i) target[delta.offset + i] ^= delta.bytes[i];
}

}  // namespace eckv
