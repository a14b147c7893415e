#pragma once

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "eckv/cluster_config.hpp"
#include "eckv/key_chunk_map.hpp"
#include "eckv/transport.hpp"

namespace eckv {

struct StateTransition {
  std::uint64_t epoch = 0;
  ServerId server = 0;
  ServerState state = ServerState::normal;
  VirtualTime at = 0;
};

/// One completed mode change: failure handling (announce to commit) or
/// restoration (coordinated normal to normal).
struct TransitionTiming {
  std::vector<ServerId> servers;
  bool to_degraded = true;
  VirtualTime start = 0;
  VirtualTime end = 0;
  VirtualTime elapsed() const { return end - start; }
};

struct CoordinatorStats {
  std::uint64_t route_requests = 0;
  std::uint64_t held_routes = 0;
  std::uint64_t unrecoverable = 0;
  std::uint64_t expelled_proxies = 0;
  std::uint64_t missing_checkpoints = 0;
};

class Coordinator : public MessageHandler {
 public:
  Coordinator(const ClusterConfig& config, Transport& net, CheckpointStore& checkpoints,
              std::ostream* state_log = nullptr);

  void start();
  void on_message(NodeId from, Message msg) override;
  void restart() override {}

  /// Begins failure handling without waiting for missed heartbeats.
  void declare_failed(const std::set<ServerId>& servers);

  const StateView& view() const { return view_; }
  ServerState state(ServerId s) const { return view_.state(s); }
  const std::vector<StateTransition>& history() const { return history_; }
  const std::vector<TransitionTiming>& timings() const { return timings_; }
  const CoordinatorStats& stats() const { return stats_; }
  /// Key to chunk map rebuilt for a failed server.
  const KeyChunkMapping* rebuilt_mappings(ServerId s) const;
  std::size_t degraded_set_entries() const { return degraded_sets_.size(); }
  bool transition_in_progress() const { return round_active_ || !migrations_.empty(); }
  bool all_normal() const { return view_.states.empty() && !round_active_; }

 private:
  struct DegradedSet {
    ServerId target;
    ServerId cause;
  };

  void detect_tick();
  // Checked several times per interval so detection lags silence by little.
  VirtualTime detect_period() const { return std::max<VirtualTime>(1, config_.heartbeat_interval / 4); }
  void start_round(std::set<ServerId> failed);
  void phase2();
  void assign_redirects(ServerId failed);
  void set_state(ServerId s, ServerState st);
  void broadcast(MessageKind kind);
  void route(NodeId from, const Message& m);
  void begin_restore(ServerId s);
  void finish_restore(ServerId s);
  void release_held();
  bool list_busy(const StripeList& list) const;

  const ClusterConfig& config_;
  Transport& net_;
  CheckpointStore& checkpoints_;
  std::ostream* log_;
  StateView view_;
  CoordinatorStats stats_;

  std::map<ServerId, VirtualTime> last_heartbeat_;
  std::map<ServerId, std::uint64_t> incarnations_;
  std::set<NodeId> live_proxies_;

  bool round_active_ = false;
  std::set<ServerId> round_servers_;
  std::set<ServerId> queued_failures_;
  std::set<NodeId> acks_pending_;
  std::vector<KeyMapping> collected_;
  VirtualTime round_start_ = 0;

  std::map<ServerId, KeyChunkMapping> rebuilt_;
  std::map<ServerId, std::size_t> redirect_load_;
  std::map<std::string, DegradedSet> degraded_sets_;
  std::map<ServerId, std::set<ServerId>> migrations_;  // restored server -> migrating stand-ins
  std::map<ServerId, VirtualTime> restore_start_;
  std::vector<std::pair<NodeId, Message>> held_;

  std::vector<StateTransition> history_;
  std::vector<TransitionTiming> timings_;
};

}  // namespace eckv
