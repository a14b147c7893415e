#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eckv {

inline constexpr std::size_t kDefaultChunkSize = 4096;

// key_size(1) | value_size(3) | flags(1) | [fragment_offset(4)] | key | value
inline constexpr std::size_t kBaseHeaderSize = 5;
inline constexpr std::size_t kFragmentExtensionSize = 4;
inline constexpr std::size_t kMaxKeySize = 255;
inline constexpr std::size_t kMaxValueSize = (1u << 24) - 1;

namespace object_flags {
inline constexpr std::uint8_t kTombstone = 0x01;
inline constexpr std::uint8_t kFragment = 0x02;
}  // namespace object_flags

class DataModelError : public std::runtime_error {
 public:
  enum class Kind { oversize, corruption, state, out_of_space, table_full, not_found };
  DataModelError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct ObjectMetadata {
  std::uint8_t key_size = 0;
  std::uint32_t value_size = 0;
  std::uint8_t flags = 0;
  std::uint32_t fragment_offset = 0;

  bool deleted() const { return flags & object_flags::kTombstone; }
  bool fragment() const { return flags & object_flags::kFragment; }
  std::size_t header_size() const {
    return kBaseHeaderSize + (fragment() ? kFragmentExtensionSize : 0);
  }

  friend bool operator==(const ObjectMetadata&, const ObjectMetadata&) = default;
};

struct ObjectRecord {
  ObjectMetadata metadata;
  std::string key;
  std::string value;

  static ObjectRecord make(std::string key, std::string value);
  static ObjectRecord make_fragment(std::string key, std::string value, std::uint32_t offset);

  std::size_t serialized_size() const {
    return metadata.header_size() + key.size() + value.size();
  }
  /// Offset of the value bytes relative to the start of the serialized object.
  std::size_t value_offset() const { return metadata.header_size() + key.size(); }

  std::vector<std::uint8_t> serialize() const;
  void serialize_into(std::span<std::uint8_t> out) const;

  /// Key used by per-server indexes and replica buffers: distinguishes the
  /// fragments of one large object from each other and from whole objects.
  std::string index_key() const;

  friend bool operator==(const ObjectRecord&, const ObjectRecord&) = default;
};

std::string whole_index_key(std::string_view key);
std::string fragment_index_key(std::string_view key, std::uint32_t offset);

struct ParsedObject {
  ObjectRecord record;
  std::size_t size = 0;
};

/// Parses one object from the front of `bytes`. Throws corruption on a
/// truncated or malformed frame.
ParsedObject parse_object(std::span<const std::uint8_t> bytes);

/// Walks the contiguous objects at the head of a chunk's content. A zero
/// key_size byte (never valid) marks the end of the used region.
std::vector<std::pair<std::size_t, ObjectRecord>> parse_chunk_objects(
    std::span<const std::uint8_t> content);

/// Payload bytes per fragment for a key of `key_size` bytes in a chunk of
/// `chunk_size` bytes.
std::size_t fragment_payload_size(std::size_t key_size, std::size_t chunk_size);

/// Splits a value too large for one chunk into fragment records.
std::vector<ObjectRecord> fragment_object(const std::string& key, const std::string& value,
                                          std::size_t chunk_size);

/// Reassembles fragments in any order by their offsets.
std::string reassemble_fragments(std::vector<ObjectRecord> fragments);

}  // namespace eckv
