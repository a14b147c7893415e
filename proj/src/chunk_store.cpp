#include "eckv/chunk_store.hpp"

#include <algorithm>
#include <cstring>

namespace eckv {
namespace {

std::size_t derived_object_capacity(const StoreConfig& c) {
  if (c.object_capacity) return c.object_capacity;
  return std::max<std::size_t>(1024, c.max_chunks * c.chunk_size / 32);
}

}  // namespace

ChunkStore::ChunkStore(StoreConfig config)
    : config_(config),
      object_index_(ObjectIndex::for_capacity(derived_object_capacity(config))),
      chunk_index_(ChunkIndex::for_capacity(config.max_chunks)) {}

ChunkRef ChunkStore::open_chunk(std::uint16_t stripe_list, std::uint8_t position) {
  if (chunks_.size() >= config_.max_chunks) {
    throw DataModelError(DataModelError::Kind::out_of_space, "store capacity exhausted");
  }
  Chunk c;
  c.id = ChunkId{stripe_list, ChunkId::kUnsealedStripe, position};
  c.content.assign(config_.chunk_size, 0);
  chunks_.push_back(std::move(c));
  const auto ref = static_cast<ChunkRef>(chunks_.size() - 1);
  unsealed_[stripe_list].push_back(ref);
  return ref;
}

void ChunkStore::index_object(const std::string& index_key, ObjectRef ref) {
  if (object_index_.insert(index_key, ref) == InsertResult::table_full) {
    throw DataModelError(DataModelError::Kind::table_full, "object index full");
  }
}

AppendResult ChunkStore::append_object(std::uint16_t stripe_list, std::uint8_t position,
                                       const ObjectRecord& object) {
  const std::size_t size = object.serialized_size();
  if (size > config_.chunk_size) {
    throw DataModelError(DataModelError::Kind::oversize, "object does not fit in a chunk");
  }
  AppendResult result;
  auto& pool = unsealed_[stripe_list];

  // Best fit: least free space that still holds the object; ties go to the
  // oldest chunk.
  std::optional<ChunkRef> target;
  for (ChunkRef ref : pool) {
    const std::size_t free = chunks_[ref].free_bytes();
    if (free < size) continue;
    if (!target || free < chunks_[*target].free_bytes()) target = ref;
  }
  if (!target) {
    if (pool.size() >= config_.unsealed_per_list && !pool.empty()) {
      ChunkRef victim = pool.front();
      for (ChunkRef ref : pool) {
        if (chunks_[ref].free_bytes() < chunks_[victim].free_bytes()) victim = ref;
      }
      result.seals.push_back(seal_chunk(victim));
    }
    target = open_chunk(stripe_list, position);
  }

  Chunk& c = chunks_[*target];
  const std::size_t offset = c.used_bytes;
  object.serialize_into(std::span<std::uint8_t>(c.content).subspan(offset, size));
  c.used_bytes += size;
  index_object(object.index_key(), ObjectRef{*target, static_cast<std::uint32_t>(offset)});

  result.chunk = *target;
  result.id = c.id;
  result.offset = offset;
  return result;
}

SealEvent ChunkStore::seal_chunk(ChunkRef ref) {
  Chunk& c = chunks_.at(ref);
  if (c.sealed) throw DataModelError(DataModelError::Kind::state, "chunk already sealed");
  auto& counter = stripe_counters_[c.id.stripe_list];
  c.id.stripe = counter++;
  c.sealed = true;
  auto& pool = unsealed_[c.id.stripe_list];
  pool.erase(std::remove(pool.begin(), pool.end(), ref), pool.end());
  if (chunk_index_.insert(c.id, ref) == InsertResult::table_full) {
    throw DataModelError(DataModelError::Kind::table_full, "chunk index full");
  }

  SealEvent ev{ref, c.id, {}};
  for (auto& [off, rec] : parse_chunk_objects(std::span<const std::uint8_t>(c.content).first(c.used_bytes))) {
    ev.keys.push_back(rec.index_key());
  }
  return ev;
}

std::vector<SealEvent> ChunkStore::seal_all() {
  std::vector<ChunkRef> refs;
  for (auto& [list, pool] : unsealed_) {
    for (ChunkRef r : pool) {
      if (chunks_[r].used_bytes > 0) refs.push_back(r);
    }
  }
  std::sort(refs.begin(), refs.end());
  std::vector<SealEvent> out;
  for (ChunkRef r : refs) out.push_back(seal_chunk(r));
  return out;
}

std::optional<LocatedObject> ChunkStore::find(const std::string& index_key) const {
  const ObjectRef* ref = object_index_.find(index_key);
  if (!ref) return std::nullopt;
  const Chunk& c = chunks_[ref->chunk];
  ParsedObject parsed =
      parse_object(std::span<const std::uint8_t>(c.content).subspan(ref->offset));
  return LocatedObject{*ref, c.id, c.sealed, std::move(parsed.record)};
}

Modification ChunkStore::update_value(const std::string& index_key, const std::string& new_value) {
  auto located = find(index_key);
  if (!located) throw DataModelError(DataModelError::Kind::not_found, "no such object");
  if (located->record.value.size() != new_value.size()) {
    throw DataModelError(DataModelError::Kind::oversize, "update must keep the value size");
  }
  Chunk& c = chunks_[located->ref.chunk];
  Modification m;
  m.chunk = located->ref.chunk;
  m.id = c.id;
  m.sealed = c.sealed;
  m.object_offset = located->ref.offset;
  m.before = located->record;
  m.after = located->record;
  m.after.value = new_value;
  const std::size_t voff = m.object_offset + m.before.value_offset();
  auto region = std::span<std::uint8_t>(c.content).subspan(voff, new_value.size());
  m.delta = compute_delta(region, std::span<const std::uint8_t>(
                                      reinterpret_cast<const std::uint8_t*>(new_value.data()),
                                      new_value.size()),
                          voff);
  std::memcpy(region.data(), new_value.data(), new_value.size());
  return m;
}

Modification ChunkStore::delete_object(const std::string& index_key) {
  auto located = find(index_key);
  if (!located) throw DataModelError(DataModelError::Kind::not_found, "no such object");
  Chunk& c = chunks_[located->ref.chunk];
  Modification m;
  m.chunk = located->ref.chunk;
  m.id = c.id;
  m.sealed = c.sealed;
  m.object_offset = located->ref.offset;
  m.before = located->record;
  m.after = located->record;
  const std::size_t size = m.before.serialized_size();

  if (c.sealed) {
    m.after.metadata.flags |= object_flags::kTombstone;
    std::fill(m.after.value.begin(), m.after.value.end(), '\0');
    const auto old_bytes = m.before.serialize();
    const auto new_bytes = m.after.serialize();
    m.delta = compute_delta(old_bytes, new_bytes, m.object_offset);
    std::memcpy(c.content.data() + m.object_offset, new_bytes.data(), new_bytes.size());
  } else {
    // Nothing is encoded yet, so the unsealed chunk can be compacted.
    auto* base = c.content.data();
    const std::size_t tail = c.used_bytes - (m.object_offset + size);
    std::memmove(base + m.object_offset, base + m.object_offset + size, tail);
    std::fill(base + c.used_bytes - size, base + c.used_bytes, 0);
    c.used_bytes -= size;
    for (auto& [off, rec] :
         parse_chunk_objects(std::span<const std::uint8_t>(c.content).first(c.used_bytes))) {
      if (off >= m.object_offset) {
        if (ObjectRef* r = object_index_.find(rec.index_key())) r->offset = static_cast<std::uint32_t>(off);
      }
    }
  }
  object_index_.remove(index_key);
  return m;
}

void ChunkStore::install_chunk(const ChunkId& id, std::span<const std::uint8_t> content) {
  if (content.size() != config_.chunk_size) {
    throw DataModelError(DataModelError::Kind::corruption, "installed chunk has wrong size");
  }
  ChunkRef ref;
  if (auto existing = find_chunk(id)) {
    ref = *existing;
    for (auto& [off, rec] : parse_chunk_objects(chunks_[ref].content)) {
      object_index_.remove(rec.index_key());
    }
  } else {
    if (chunks_.size() >= config_.max_chunks) {
      throw DataModelError(DataModelError::Kind::out_of_space, "store capacity exhausted");
    }
    Chunk c;
    c.id = id;
    c.sealed = true;
    chunks_.push_back(std::move(c));
    ref = static_cast<ChunkRef>(chunks_.size() - 1);
    if (chunk_index_.insert(id, ref) == InsertResult::table_full) {
      throw DataModelError(DataModelError::Kind::table_full, "chunk index full");
    }
    auto& counter = stripe_counters_[id.stripe_list];
    counter = std::max(counter, id.stripe + 1);
  }
  Chunk& c = chunks_[ref];
  c.content.assign(content.begin(), content.end());
  std::size_t used = 0;
  for (auto& [off, rec] : parse_chunk_objects(c.content)) {
    used = off + rec.serialized_size();
    if (!rec.metadata.deleted()) index_object(rec.index_key(), ObjectRef{ref, static_cast<std::uint32_t>(off)});
  }
  c.used_bytes = used;
}

std::optional<ChunkRef> ChunkStore::find_chunk(const ChunkId& id) const {
  return chunk_index_.lookup(id);
}

std::size_t ChunkStore::unsealed_count(std::uint16_t stripe_list) const {
  auto it = unsealed_.find(stripe_list);
  return it == unsealed_.end() ? 0 : it->second.size();
}

std::uint64_t ChunkStore::stripe_counter(std::uint16_t stripe_list) const {
  auto it = stripe_counters_.find(stripe_list);
  return it == stripe_counters_.end() ? 0 : it->second;
}

std::map<std::string, ObjectRef> ChunkStore::object_map() const {
  std::map<std::string, ObjectRef> out;
  object_index_.for_each([&](const std::string& k, const ObjectRef& r) { out[k] = r; });
  return out;
}

std::map<ChunkId, ChunkRef> ChunkStore::chunk_map() const {
  std::map<ChunkId, ChunkRef> out;
  chunk_index_.for_each([&](const ChunkId& k, const ChunkRef& r) { out[k] = r; });
  return out;
}

RebuiltIndexes rebuild_indexes(std::span<const Chunk> chunks, std::size_t object_capacity,
                               std::size_t chunk_capacity) {
  RebuiltIndexes out{ObjectIndex::for_capacity(std::max<std::size_t>(object_capacity, 1)),
                     ChunkIndex::for_capacity(std::max<std::size_t>(chunk_capacity, 1))};
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const Chunk& c = chunks[i];
    const auto ref = static_cast<ChunkRef>(i);
    std::vector<std::pair<std::size_t, ObjectRecord>> objects;
    try {
      objects = parse_chunk_objects(c.content);
    } catch (const DataModelError& e) {
      throw DataModelError(DataModelError::Kind::corruption,
                           "chunk " + c.id.to_string() + ": " + e.what());
    }
    for (auto& [off, rec] : objects) {
      if (rec.metadata.deleted()) continue;
      if (out.objects.insert(rec.index_key(), ObjectRef{ref, static_cast<std::uint32_t>(off)}) ==
          InsertResult::table_full) {
        throw DataModelError(DataModelError::Kind::table_full, "object index full during rebuild");
      }
    }
    if (c.sealed) out.chunks.insert(c.id, ref);
  }
  return out;
}

}  // namespace eckv
