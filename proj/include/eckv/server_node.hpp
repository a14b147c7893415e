#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "eckv/chunk_store.hpp"
#include "eckv/cluster_config.hpp"
#include "eckv/erasure_codec.hpp"
#include "eckv/key_chunk_map.hpp"
#include "eckv/transport.hpp"

namespace eckv {

struct ServerStats {
  std::uint64_t sets = 0;
  std::uint64_t gets = 0;
  std::uint64_t updates = 0;
  std::uint64_t deletes = 0;
  std::uint64_t seals = 0;           // data chunks sealed here
  std::uint64_t seals_applied = 0;   // as a parity server
  std::uint64_t seal_refetches = 0;
  std::uint64_t deltas_applied = 0;
  std::uint64_t reverts = 0;          // requests whose backups were undone
  std::uint64_t degraded_requests = 0;
  std::uint64_t reconstructions = 0;
  std::uint64_t reconstruction_retries = 0;
  std::uint64_t chunk_fetches = 0;   // RECONSTRUCT_FETCH messages sent
  std::uint64_t checkpoints = 0;
  std::uint64_t stashed = 0;
  std::uint64_t migrated = 0;
  std::uint64_t unrecoverable = 0;
};

/// Undo record for one change applied on behalf of a proxy request.
struct DeltaBackup {
  NodeId proxy = 0;
  std::uint64_t seq = 0;
  MessageKind kind = MessageKind::delta_apply;
  bool replica_target = false;  // patched a replica instead of a parity chunk
  std::string key;              // index key, replica targets
  ChunkId chunk_id;             // data chunk id, parity-chunk targets
  std::uint32_t offset = 0;     // object-relative (replica) or chunk-relative
  std::vector<std::uint8_t> bytes;
  std::optional<ObjectRecord> removed;  // REMOVE_REPLICA
};

class ServerNode : public MessageHandler {
 public:
  ServerNode(ServerId id, const ClusterConfig& config, Transport& net, CheckpointStore& checkpoints);

  ServerId id() const { return id_; }
  /// Starts heartbeats and periodic checkpoints.
  void start();

  void on_message(NodeId from, Message msg) override;
  void restart() override;

  /// Seals every non-empty unsealed chunk and sends the seals.
  void flush();
  void checkpoint();

  const ChunkStore& store() const { return store_; }
  const StateView& view() const { return view_; }
  const ServerStats& stats() const { return stats_; }
  /// Parity chunk stored here for (list, stripe, parity position).
  const ChunkBuffer* parity_chunk(const ChunkId& id) const;
  std::vector<ChunkId> parity_chunk_ids() const;
  const std::map<std::string, ObjectRecord>& replicas() const { return replicas_; }
  std::size_t backup_count() const;
  std::size_t pending_seal_count() const { return pending_seals_.size(); }
  std::size_t redirect_buffer_size() const { return redirect_buffer_.size(); }
  std::size_t stash_size() const;
  std::size_t cached_chunk_count() const;
  /// Chunks rebuilt here on behalf of a failed `owner`, if any.
  const ChunkStore* cache(ServerId owner) const;
  std::size_t outstanding_fanouts() const { return fanouts_.size(); }
  bool migrating() const { return !migrations_.empty(); }
  const KeyChunkMapping& mappings() const { return mapping_; }

 private:
  struct FanOut {
    std::map<ServerId, std::pair<std::uint64_t, Message>> outstanding;  // logical target
    std::uint16_t list = 0;
    bool failed = false;
    std::function<void(bool)> done;
  };
  struct PendingSeal {
    NodeId from = 0;
    std::vector<std::string> keys;
    std::vector<std::pair<NodeId, Message>> queued;  // deltas that arrived behind it
    bool refetching = false;
  };
  struct BufferedObject {
    ObjectRecord record;
    ServerId cause = 0;  // failed server that forced the redirect
  };
  struct ReplicaCopy {
    ObjectRecord record;
    bool dirty = false;
    bool deleted = false;
  };
  struct Reconstruction {
    std::map<int, ChunkBuffer> received;
    std::set<int> waiting;
    bool failed = false;
    int attempt = 0;
    bool parity_phase = false;
    std::uint64_t token = 0;
    std::vector<std::pair<NodeId, Message>> locks;  // release messages to send
    std::vector<std::function<void(bool)>> waiters;
  };
  struct Migration {
    bool started = false;
    std::size_t outstanding = 0;
  };
  enum class Where { none, buffer, chunk, replica };
  // (owner of the data chunk, stripe list, stripe)
  using StripeKey = std::tuple<ServerId, std::uint16_t, std::uint64_t>;
  using LockHolder = std::pair<NodeId, std::uint64_t>;

  // plumbing
  void send(NodeId to, Message m);
  void reply(NodeId to, const Message& request, Message r);
  std::uint64_t await(std::function<void(const Message&)> fn);
  void handle_reply(NodeId from, const Message& m);
  void fan_out(std::uint16_t list, const std::vector<ServerId>& targets, const Message& proto,
               std::function<void(bool)> done);
  bool route_to_member(std::uint16_t list, ServerId target, Message& m);
  void fanout_ack(std::uint64_t fanout_id, ServerId target, bool ok);
  void revisit_fanouts();
  void flush_deferred();
  void heartbeat_tick();
  void checkpoint_tick();
  const StripeList& list_of_key(const std::string& key, int* position = nullptr) const;
  int my_position(std::uint16_t list) const;

  // data role
  void data_set(NodeId from, const Message& m);
  void data_get(NodeId from, const Message& m);
  void data_update(NodeId from, const Message& m);
  void data_delete(NodeId from, const Message& m);
  void after_append(const AppendResult& r);
  void send_seal(const SealEvent& ev);
  void local_upsert(const ObjectRecord& rec, std::function<void(bool)> done);

  // parity role
  void parity_set(NodeId from, const Message& m);
  void parity_seal(NodeId from, const Message& m);
  bool try_apply_seal(const ChunkId& id);
  void refetch_seal(const ChunkId& id);
  void parity_delta(NodeId from, const Message& m);
  void parity_revert(NodeId from, const Message& m);
  void parity_remove(NodeId from, const Message& m);
  void undo(const DeltaBackup& b);
  void collect_garbage(NodeId proxy, std::uint64_t watermark);
  void stash(NodeId from, const Message& m);

  // any role
  void handle_fetch(NodeId from, const Message& m);
  // Stripe locks keep data chunks and parities of one stripe from drifting
  // apart while a stand-in reads them.
  bool hold_if_locked(const StripeKey& key, std::function<void()> retry);
  std::function<void(bool)> tracked(const StripeKey& key, std::function<void(bool)> done);
  void release_lock(const StripeKey& key, const LockHolder& holder);
  void release_reconstruction_locks(Reconstruction& rc);
  void fetch_parities(const ChunkId& id, ServerId owner);
  void handle_view(const Message& m);

  // redirected-server role
  void degraded(NodeId from, const Message& m);
  void locate(const std::string& key, const std::optional<ChunkId>& chunk, ServerId owner,
              std::function<void(Where)> cb);
  void fetch_replica(const std::string& key, const ChunkId& chunk, std::size_t parity_index,
                     std::function<void(Where)> cb);
  void reconstruct(const ChunkId& id, ServerId owner, std::function<void(bool)> cb);
  void start_reconstruction(const ChunkId& id, ServerId owner);
  void finish_reconstruction(const ChunkId& id, ServerId owner);
  ChunkStore& cache_for(ServerId owner);
  void degraded_done();

  // migration
  void begin_migration(ServerId target);
  void run_migration(ServerId target);
  void migration_step_done(ServerId target);
  void receive_migration(NodeId from, const Message& m);

  ServerId id_;
  const ClusterConfig& config_;
  Transport& net_;
  CheckpointStore& checkpoints_;
  ErasureCodec codec_;
  ChunkStore store_;
  StateView view_;
  ServerStats stats_;

  std::uint64_t next_seq_ = 1;
  std::uint64_t incarnation_ = 0;  // bumped on every restart, sent in heartbeats
  std::uint64_t next_fanout_ = 1;
  std::unordered_map<std::uint64_t, std::function<void(const Message&)>> waiters_;
  std::map<std::uint64_t, FanOut> fanouts_;
  std::map<ServerId, std::vector<std::pair<std::uint16_t, Message>>> deferred_;

  KeyChunkMapping mapping_;
  std::size_t mappings_since_checkpoint_ = 0;
  bool mapping_dirty_ = false;

  std::map<std::string, ObjectRecord> replicas_;
  std::unordered_map<ChunkId, ChunkBuffer> parity_chunks_;
  std::set<ChunkId> sealed_data_;
  std::map<ChunkId, PendingSeal> pending_seals_;
  std::map<std::pair<NodeId, std::uint64_t>, std::vector<DeltaBackup>> backups_;
  std::set<std::pair<NodeId, std::uint64_t>> reverted_;

  std::map<ServerId, std::deque<Message>> stash_;
  std::map<std::string, BufferedObject> redirect_buffer_;
  std::set<std::string> buffer_deleted_;
  std::map<ServerId, std::unique_ptr<ChunkStore>> caches_;
  std::map<ServerId, std::set<ChunkId>> dirty_chunks_;
  std::map<std::string, ReplicaCopy> replica_cache_;  // by index key
  std::map<ChunkId, Reconstruction> reconstructions_;
  std::size_t degraded_pending_ = 0;
  std::map<StripeKey, std::size_t> inflight_;  // sealed-stripe fan-outs not fully acked
  std::map<StripeKey, std::set<LockHolder>> locks_;
  std::map<StripeKey, std::vector<std::function<void()>>> held_;
  std::map<StripeKey, std::vector<std::function<void()>>> drain_waiters_;
  std::uint64_t next_lock_token_ = 1;
  std::map<ServerId, Migration> migrations_;
};

}  // namespace eckv
