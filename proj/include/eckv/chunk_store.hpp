#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eckv/chunk.hpp"
#include "eckv/cuckoo_index.hpp"
#include "eckv/erasure_codec.hpp"
#include "eckv/object_record.hpp"

namespace eckv {

using ChunkRef = std::uint32_t;

struct ObjectRef {
  ChunkRef chunk = 0;
  std::uint32_t offset = 0;
  friend bool operator==(const ObjectRef&, const ObjectRef&) = default;
};

using ObjectIndex = CuckooIndex<std::string, ObjectRef>;
using ChunkIndex = CuckooIndex<ChunkId, ChunkRef>;

struct StoreConfig {
  std::size_t chunk_size = kDefaultChunkSize;
  std::size_t max_chunks = 1u << 16;
  std::size_t unsealed_per_list = 4;
  // 0 derives a bound from max_chunks assuming ~32-byte objects.
  std::size_t object_capacity = 0;
};

struct SealEvent {
  ChunkRef chunk = 0;
  ChunkId id;
  std::vector<std::string> keys;  // index keys in intra-chunk append order
};

struct AppendResult {
  ChunkRef chunk = 0;
  ChunkId id;  // unsealed-stripe id; the real stripe is assigned at seal time
  std::size_t offset = 0;
  std::vector<SealEvent> seals;  // chunks sealed to make room, if any
};

/// Effect of an in-place modification; `delta` is relative to the chunk.
struct Modification {
  ChunkRef chunk = 0;
  ChunkId id;
  bool sealed = false;
  std::size_t object_offset = 0;
  ObjectRecord before;
  ObjectRecord after;
  DataDelta delta;
};

struct LocatedObject {
  ObjectRef ref;
  ChunkId chunk_id;
  bool sealed = false;
  ObjectRecord record;
};

/// Per-server data-chunk storage: appends objects into a bounded pool of
/// unsealed chunks per stripe list, seals them with per-list stripe counters,
/// and keeps the object and chunk indexes coherent with chunk bytes.
class ChunkStore {
 public:
  explicit ChunkStore(StoreConfig config = {});

  const StoreConfig& config() const { return config_; }

  AppendResult append_object(std::uint16_t stripe_list, std::uint8_t position,
                             const ObjectRecord& object);
  SealEvent seal_chunk(ChunkRef ref);
  /// Seals every non-empty unsealed chunk.
  std::vector<SealEvent> seal_all();

  std::optional<LocatedObject> find(const std::string& index_key) const;

  /// Overwrites a value of equal size in place.
  Modification update_value(const std::string& index_key, const std::string& new_value);
  /// Sealed: sets the tombstone flag and zeroes the value. Unsealed: removes
  /// the object bytes and compacts the chunk (delta left empty).
  Modification delete_object(const std::string& index_key);

  /// Replaces a sealed chunk's bytes (e.g. with a reconstructed copy) and
  /// re-derives the object index entries for it.
  void install_chunk(const ChunkId& id, std::span<const std::uint8_t> content);

  const Chunk& chunk(ChunkRef ref) const { return chunks_.at(ref); }
  std::optional<ChunkRef> find_chunk(const ChunkId& id) const;
  std::size_t chunk_count() const { return chunks_.size(); }
  std::size_t unsealed_count(std::uint16_t stripe_list) const;
  std::uint64_t stripe_counter(std::uint16_t stripe_list) const;
  std::span<const Chunk> chunks() const { return chunks_; }

  const ObjectIndex& object_index() const { return object_index_; }
  const ChunkIndex& chunk_index() const { return chunk_index_; }

  std::map<std::string, ObjectRef> object_map() const;
  std::map<ChunkId, ChunkRef> chunk_map() const;

 private:
  ChunkRef open_chunk(std::uint16_t stripe_list, std::uint8_t position);
  void index_object(const std::string& index_key, ObjectRef ref);

  StoreConfig config_;
  std::vector<Chunk> chunks_;
  std::unordered_map<std::uint16_t, std::vector<ChunkRef>> unsealed_;
  std::unordered_map<std::uint16_t, std::uint64_t> stripe_counters_;
  ObjectIndex object_index_;
  ChunkIndex chunk_index_;
};

struct RebuiltIndexes {
  ObjectIndex objects;
  ChunkIndex chunks;
};

/// Reinserts references for every live object and every sealed chunk. Chunk
/// refs are positions in `chunks`.
RebuiltIndexes rebuild_indexes(std::span<const Chunk> chunks, std::size_t object_capacity,
                               std::size_t chunk_capacity);

}  // namespace eckv
