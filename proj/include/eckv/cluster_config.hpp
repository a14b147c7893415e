#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eckv/chunk_store.hpp"
#include "eckv/erasure_codec.hpp"
#include "eckv/placement.hpp"
#include "eckv/transport.hpp"

namespace eckv {

// Node ID ranges: servers below kProxyIdBase, proxies from kProxyIdBase.
inline constexpr NodeId kProxyIdBase = 1000;
inline constexpr NodeId kCoordinatorId = 2000;

inline bool is_server_id(NodeId id) { return id < kProxyIdBase; }
inline bool is_proxy_id(NodeId id) { return id >= kProxyIdBase && id < kCoordinatorId; }

enum class ServerState : std::uint8_t { normal = 0, intermediate, degraded, coordinated_normal };
const char* state_name(ServerState s);
/// Legal next state, following normal -> intermediate -> degraded ->
/// coordinated_normal -> normal.
ServerState next_state(ServerState s);

/// A node's copy of the coordinator's server states and redirect table.
/// Broadcasts carry the whole snapshot, so applying one replaces the view.
struct StateView {
  std::uint64_t epoch = 0;
  std::map<ServerId, ServerState> states;  // servers not in normal state
  std::map<std::pair<ServerId, std::uint16_t>, ServerId> redirects;

  ServerState state(ServerId s) const {
    auto it = states.find(s);
    return it == states.end() ? ServerState::normal : it->second;
  }
  bool all_normal(const StripeList& list) const;
  std::optional<ServerId> redirect(ServerId failed, std::uint16_t list) const;
  /// Ignores snapshots older than the current epoch.
  bool apply(const Message& m);
  void fill(Message& m) const;

  friend bool operator==(const StateView&, const StateView&) = default;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClusterConfig {
  CodeConfig code;
  int stripe_list_count = 16;
  std::size_t chunk_size = kDefaultChunkSize;
  std::size_t unsealed_per_list = 4;
  std::size_t max_chunks = 4096;
  std::size_t object_capacity = 1u << 16;
  std::vector<ServerId> servers;
  int proxies = 4;
  std::map<NodeId, std::string> addresses;  // host:port, tcp transport only
  std::vector<StripeList> lists;

  VirtualTime request_timeout = 1 * kSeconds;
  VirtualTime heartbeat_interval = 500 * kMillis;
  int heartbeat_misses = 4;
  VirtualTime checkpoint_interval = 10 * kSeconds;
  std::size_t checkpoint_every = 4096;

  static ClusterConfig make(int servers, int proxies, int n, int k, int stripe_lists);

  /// Validates and generates stripe lists if none were given.
  void finalize();

  std::vector<NodeId> proxy_ids() const;
  StoreConfig store_config() const;
  const StripeList& list(std::uint16_t id) const { return lists.at(id); }
};

/// Line format, '#' comments:
///   n 10 / k 8 / scheme rs|xor / stripe_lists 16 / chunk_size 4096
///   servers 16 / proxies 4 / unsealed_per_list 4 / max_chunks N / objects N
///   address <node> <host:port> / list id 0 data ... parity ...
ClusterConfig parse_cluster_config(std::string_view text);
ClusterConfig load_cluster_config(const std::string& path);
std::string format_cluster_config(const ClusterConfig& config);

}  // namespace eckv
