#include "eckv/object_record.hpp"

#include <algorithm>
#include <cstring>

namespace eckv {
namespace {

void put_be(std::uint8_t* out, std::uint64_t v, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) {
    out[i] = static_cast<std::uint8_t>(v & 0xFF);
    v >>= 8;
  }
}

std::uint64_t get_be(const std::uint8_t* in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v = (v << 8) | in[i];
  return v;
}

void check_sizes(const std::string& key, const std::string& value) {
  if (key.empty() || key.size() > kMaxKeySize) {
    throw DataModelError(DataModelError::Kind::oversize, "key size must be 1..255 bytes");
  }
  if (value.size() > kMaxValueSize) {
    throw DataModelError(DataModelError::Kind::oversize, "value exceeds 3-byte size field");
  }
}

}  // namespace

ObjectRecord ObjectRecord::make(std::string key, std::string value) {
  check_sizes(key, value);
  ObjectRecord r;
  r.metadata.key_size = static_cast<std::uint8_t>(key.size());
  r.metadata.value_size = static_cast<std::uint32_t>(value.size());
  r.key = std::move(key);
  r.value = std::move(value);
  return r;
}

ObjectRecord ObjectRecord::make_fragment(std::string key, std::string value,
                                         std::uint32_t offset) {
  ObjectRecord r = make(std::move(key), std::move(value));
  r.metadata.flags |= object_flags::kFragment;
  r.metadata.fragment_offset = offset;
  return r;
}

std::vector<std::uint8_t> ObjectRecord::serialize() const {
  std::vector<std::uint8_t> out(serialized_size());
  serialize_into(out);
  return out;
}

void ObjectRecord::serialize_into(std::span<std::uint8_t> out) const {
  std::uint8_t* p = out.data();
  p[0] = metadata.key_size;
  put_be(p + 1, metadata.value_size, 3);
  p[4] = metadata.flags;
  std::size_t pos = kBaseHeaderSize;
  if (metadata.fragment()) {
    put_be(p + pos, metadata.fragment_offset, 4);
    pos += kFragmentExtensionSize;
  }
  std::memcpy(p + pos, key.data(), key.size());
  pos += key.size();
  if (!value.empty()) std::memcpy(p + pos, value.data(), value.size());
}

std::string whole_index_key(std::string_view key) {
  std::string out;
  out.reserve(key.size() + 1);
  out.push_back('\0');
  out.append(key);
  return out;
}

std::string fragment_index_key(std::string_view key, std::uint32_t offset) {
  std::string out;
  out.reserve(key.size() + 5);
  out.push_back('\1');
  out.append(key);
  std::uint8_t be[4];
  put_be(be, offset, 4);
  out.append(reinterpret_cast<const char*>(be), 4);
  return out;
}

std::string ObjectRecord::index_key() const {
  return metadata.fragment() ? fragment_index_key(key, metadata.fragment_offset)
                             : whole_index_key(key);
}

ParsedObject parse_object(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kBaseHeaderSize) {
    throw DataModelError(DataModelError::Kind::corruption, "truncated object header");
  }
  ParsedObject out;
  auto& md = out.record.metadata;
  md.key_size = bytes[0];
  md.value_size = static_cast<std::uint32_t>(get_be(&bytes[1], 3));
  md.flags = bytes[4];
  if (md.key_size == 0) {
    throw DataModelError(DataModelError::Kind::corruption, "zero key size");
  }
  if (md.flags & ~(object_flags::kTombstone | object_flags::kFragment)) {
    throw DataModelError(DataModelError::Kind::corruption, "unknown object flags");
  }
  std::size_t pos = kBaseHeaderSize;
  if (md.fragment()) {
    if (bytes.size() < pos + kFragmentExtensionSize) {
      throw DataModelError(DataModelError::Kind::corruption, "truncated fragment header");
    }
    md.fragment_offset = static_cast<std::uint32_t>(get_be(&bytes[pos], 4));
    pos += kFragmentExtensionSize;
  }
  if (bytes.size() < pos + md.key_size + md.value_size) {
    throw DataModelError(DataModelError::Kind::corruption, "truncated object body");
  }
  out.record.key.assign(reinterpret_cast<const char*>(&bytes[pos]), md.key_size);
  pos += md.key_size;
  out.record.value.assign(reinterpret_cast<const char*>(&bytes[pos]), md.value_size);
  pos += md.value_size;
  out.size = pos;
  return out;
}

std::vector<std::pair<std::size_t, ObjectRecord>> parse_chunk_objects(
    std::span<const std::uint8_t> content) {
  std::vector<std::pair<std::size_t, ObjectRecord>> out;
  std::size_t pos = 0;
  while (pos < content.size() && content[pos] != 0) {
    ParsedObject parsed = parse_object(content.subspan(pos));
    out.emplace_back(pos, std::move(parsed.record));
    pos += parsed.size;
  }
  return out;
}

std::size_t fragment_payload_size(std::size_t key_size, std::size_t chunk_size) {
  const std::size_t overhead = kBaseHeaderSize + kFragmentExtensionSize + key_size;
  return chunk_size > overhead ? chunk_size - overhead : 0;
}

std::vector<ObjectRecord> fragment_object(const std::string& key, const std::string& value,
                                          std::size_t chunk_size) {
  if (key.empty() || key.size() > kMaxKeySize) {
    throw DataModelError(DataModelError::Kind::oversize, "key size must be 1..255 bytes");
  }
  const std::size_t payload = fragment_payload_size(key.size(), chunk_size);
  if (payload == 0) {
    throw DataModelError(DataModelError::Kind::oversize,
                         "key too large to fit a fragment payload in one chunk");
  }
  std::vector<ObjectRecord> out;
  std::size_t offset = 0;
  do {
    const std::size_t len = std::min(payload, value.size() - offset);
    out.push_back(ObjectRecord::make_fragment(key, value.substr(offset, len),
                                              static_cast<std::uint32_t>(offset)));
    offset += len;
  } while (offset < value.size());
  return out;
}

std::string reassemble_fragments(std::vector<ObjectRecord> fragments) {
  std::sort(fragments.begin(), fragments.end(), [](const auto& a, const auto& b) {
    return a.metadata.fragment_offset < b.metadata.fragment_offset;
  });
  std::string out;
  for (const auto& f : fragments) {
    if (f.metadata.fragment_offset != out.size()) {
      throw DataModelError(DataModelError::Kind::corruption, "fragment offsets leave a gap");
    }
    out += f.value;
  }
  return out;
}

}  // namespace eckv
