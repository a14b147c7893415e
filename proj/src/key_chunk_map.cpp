#include "eckv/key_chunk_map.hpp"

#include <fstream>
#include <iterator>

#include "eckv/object_record.hpp"

namespace eckv {

std::vector<std::uint8_t> encode_checkpoint(const KeyChunkMapping& mapping) {
  std::vector<std::uint8_t> out;
  for (const auto& [key, id] : mapping) {
    if (key.empty() || key.size() > kMaxKeySize) {
      throw DataModelError(DataModelError::Kind::oversize, "checkpoint key size out of range");
    }
    out.push_back(static_cast<std::uint8_t>(key.size()));
    out.insert(out.end(), key.begin(), key.end());
    const auto bytes = id.serialize();
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  const std::uint64_t n = mapping.size();
  for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  return out;
}

KeyChunkMapping decode_checkpoint(std::span<const std::uint8_t> bytes) {
  auto corrupt = [](const char* why) {
    return DataModelError(DataModelError::Kind::corruption, std::string("checkpoint: ") + why);
  };
  if (bytes.size() < 8) throw corrupt("missing trailer");
  std::uint64_t expected = 0;
  for (std::size_t i = bytes.size() - 8; i < bytes.size(); ++i) expected = (expected << 8) | bytes[i];
  const auto body = bytes.first(bytes.size() - 8);
  KeyChunkMapping out;
  std::uint64_t count = 0;
  std::size_t pos = 0;
  while (pos < body.size()) {
    const std::size_t ks = body[pos++];
    if (ks == 0) throw corrupt("zero key size");
    if (body.size() - pos < ks + ChunkId::kSerializedSize) throw corrupt("truncated record");
    std::string key(reinterpret_cast<const char*>(body.data() + pos), ks);
    pos += ks;
    out[std::move(key)] = ChunkId::deserialize(body.subspan(pos, ChunkId::kSerializedSize));
    pos += ChunkId::kSerializedSize;
    ++count;
  }
  if (count != expected || out.size() != count) throw corrupt("record count mismatch");
  return out;
}

void MemoryCheckpointStore::save(ServerId server, const KeyChunkMapping& mapping) {
  auto bytes = encode_checkpoint(mapping);
  std::lock_guard lock(mu_);
  files_[server] = std::move(bytes);
  ++saves_;
}

std::optional<KeyChunkMapping> MemoryCheckpointStore::load(ServerId server) const {
  std::lock_guard lock(mu_);
  auto it = files_.find(server);
  if (it == files_.end()) return std::nullopt;
  return decode_checkpoint(it->second);
}

FileCheckpointStore::FileCheckpointStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path FileCheckpointStore::path_for(ServerId server) const {
  return dir_ / ("server-" + std::to_string(server) + ".ckpt");
}

void FileCheckpointStore::save(ServerId server, const KeyChunkMapping& mapping) {
  const auto bytes = encode_checkpoint(mapping);
  const auto final_path = path_for(server);
  auto tmp = final_path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) throw std::runtime_error("cannot write checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, final_path);
}

std::optional<KeyChunkMapping> FileCheckpointStore::load(ServerId server) const {
  std::ifstream f(path_for(server), std::ios::binary);
  if (!f) return std::nullopt;
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace eckv
