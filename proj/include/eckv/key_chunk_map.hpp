#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eckv/chunk.hpp"
#include "eckv/placement.hpp"

namespace eckv {

using KeyChunkMapping = std::map<std::string, ChunkId>;

// record = key_size(1) | key | ChunkId(8); trailer = record count(8, BE).
std::vector<std::uint8_t> encode_checkpoint(const KeyChunkMapping& mapping);
/// Throws DataModelError(corruption) on truncation or a count mismatch.
KeyChunkMapping decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Secondary storage for a server's key-to-chunk checkpoints. It outlives
/// the server process, so the coordinator can read a failed server's copy.
class CheckpointStore {
 public:
  virtual ~CheckpointStore() = default;
  virtual void save(ServerId server, const KeyChunkMapping& mapping) = 0;
  virtual std::optional<KeyChunkMapping> load(ServerId server) const = 0;
};

class MemoryCheckpointStore : public CheckpointStore {
 public:
  void save(ServerId server, const KeyChunkMapping& mapping) override;
  std::optional<KeyChunkMapping> load(ServerId server) const override;
  std::size_t saves() const { return saves_; }

 private:
  mutable std::mutex mu_;
  std::map<ServerId, std::vector<std::uint8_t>> files_;
  std::size_t saves_ = 0;
};

/// One file per server, replaced atomically via a temp file and rename.
class FileCheckpointStore : public CheckpointStore {
 public:
  explicit FileCheckpointStore(std::filesystem::path dir);
  void save(ServerId server, const KeyChunkMapping& mapping) override;
  std::optional<KeyChunkMapping> load(ServerId server) const override;
  std::filesystem::path path_for(ServerId server) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace eckv
