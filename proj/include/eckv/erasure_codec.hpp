#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eckv {

enum class CodeScheme { reed_solomon, single_parity_xor };

struct CodeConfig {
  int n = 10;
  int k = 8;
  CodeScheme scheme = CodeScheme::reed_solomon;

  int parity_count() const { return n - k; }
  void validate() const;
};

using ChunkBuffer = std::vector<std::uint8_t>;

/// Field-wise difference of a modified region; only the changed span is
/// carried, never the whole chunk.
struct DataDelta {
  std::size_t offset = 0;
  std::vector<std::uint8_t> bytes;
};

class CodecError : public std::runtime_error {
 public:
  enum class Kind { config, length, insufficient_chunks, position, bounds };
  CodecError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Systematic MDS code over GF(2^8). Data positions are 0..k-1, parity
/// positions k..n-1. Reed-Solomon parity rows come from a Cauchy matrix;
/// the single-parity scheme uses an all-ones row.
class ErasureCodec {
 public:
  explicit ErasureCodec(CodeConfig config);

  const CodeConfig& config() const { return config_; }

  /// Coefficient applied to data position `data_position` in the parity
  /// chunk stored at `parity_position` (k <= parity_position < n).
  std::uint8_t coefficient(int parity_position, int data_position) const;

  std::vector<ChunkBuffer> encode(std::span<const ChunkBuffer> data) const;

  /// Recovers the k data chunks from any k (or more) stripe positions.
  std::vector<ChunkBuffer> decode(const std::map<int, ChunkBuffer>& available) const;

  /// parity' = parity + coefficient * delta over the delta's region.
  void apply_delta_in_place(ChunkBuffer& parity, int parity_position, int data_position,
                            const DataDelta& delta) const;
  ChunkBuffer apply_delta(const ChunkBuffer& parity, int parity_position, int data_position,
                          const DataDelta& delta) const;

 private:
  void check_position(int position) const;

  CodeConfig config_;
  // parity_rows_[p][d] for p in [0, n-k), d in [0, k).
  std::vector<std::vector<std::uint8_t>> parity_rows_;
};

std::vector<ChunkBuffer> encode_stripe(const CodeConfig& config, std::span<const ChunkBuffer> data);
std::vector<ChunkBuffer> decode_stripe(const CodeConfig& config,
                                       const std::map<int, ChunkBuffer>& available);
ChunkBuffer apply_delta(const CodeConfig& config, const ChunkBuffer& parity, int parity_position,
                        int data_position, const DataDelta& delta);

/// In GF(2^8) subtraction is XOR, so the delta is the bytewise XOR of the
/// two regions.
DataDelta compute_delta(std::span<const std::uint8_t> old_region,
                        std::span<const std::uint8_t> new_region, std::size_t offset);

/// XOR `delta` into `target` at the delta's offset.
void xor_delta_into(std::span<std::uint8_t> target, const DataDelta& delta);

}  // namespace eckv
