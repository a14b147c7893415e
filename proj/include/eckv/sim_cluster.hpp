#pragma once

#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "eckv/coordinator.hpp"
#include "eckv/linearizability.hpp"
#include "eckv/proxy_node.hpp"
#include "eckv/server_node.hpp"
#include "eckv/sim_network.hpp"
#include "eckv/workload.hpp"

namespace eckv {

struct WorkloadMetrics {
  std::string phase;
  std::uint64_t ops = 0;  // logical operations (an RMW counts once)
  std::uint64_t failed = 0;
  std::map<std::string, std::uint64_t> counts;  // per request type
  VirtualTime elapsed = 0;
  double throughput = 0;  // logical ops per virtual second
  double p50_us = 0;
  double p95_us = 0;
  double p99_us = 0;
};

/// Human-readable table followed by one "metric <phase>.<name> <value>" line each.
std::string format_metrics(const WorkloadMetrics& m);

struct ParityReport {
  std::size_t stripes = 0;
  std::size_t mismatches = 0;
  std::vector<std::string> details;
  bool ok() const { return mismatches == 0; }
};

/// A whole cluster on one deterministic simulated network: servers
/// 0..S-1, proxies from kProxyIdBase, and the coordinator.
class SimCluster {
 public:
  explicit SimCluster(ClusterConfig config, SimNetConfig net = {});

  SimNetwork& net() { return net_; }
  const ClusterConfig& config() const { return config_; }
  Coordinator& coordinator() { return *coordinator_; }
  ServerNode& server(ServerId s) { return *servers_.at(s); }
  ProxyNode& proxy(std::size_t i) { return *proxies_.at(i); }
  std::size_t proxy_count() const { return proxies_.size(); }
  MemoryCheckpointStore& checkpoints() { return checkpoints_; }
  std::string state_log() const { return state_log_.str(); }

  /// Sends one client operation through proxy `p` and records it in the
  /// history. An RMW becomes a GET followed by an UPDATE.
  void issue(std::size_t p, const Operation& op, ClientCallback done = {});
  const std::vector<HistoryOp>& history() const { return history_; }
  void clear_history() { history_.clear(); }

  /// Issue and run the simulation until the answer arrives.
  ClientResult call(std::size_t p, const Operation& op, VirtualTime horizon = 120 * kSeconds);

  void fail(ServerId s) { net_.fail(s); }
  void restore(ServerId s) { net_.restore(s); }

  std::size_t pending_requests() const;
  /// Runs until no client request is outstanding.
  void run_until_idle(VirtualTime horizon = 600 * kSeconds);
  /// Runs until requests are done, every server is Normal again and no
  /// transition or migration is running.
  void settle(VirtualTime horizon = 600 * kSeconds);
  /// Runs until `s` reaches state `st` at the coordinator.
  void wait_for_state(ServerId s, ServerState st, VirtualTime horizon = 120 * kSeconds);
  /// Seals every partly filled chunk and lets the seals propagate.
  void flush_seals();

  bool views_agree() const;
  ParityReport check_parity() const;

  /// Closed-loop clients, each bound to proxy (client mod proxies).
  WorkloadMetrics load(WorkloadGenerator& gen, std::size_t clients);
  WorkloadMetrics run(WorkloadGenerator& gen, std::size_t ops, std::size_t clients);

 private:
  WorkloadMetrics drive(WorkloadGenerator& gen, std::size_t ops, std::size_t clients, bool load_phase);

  ClusterConfig config_;
  SimNetwork net_;
  MemoryCheckpointStore checkpoints_;
  std::ostringstream state_log_;
  std::vector<std::unique_ptr<ServerNode>> servers_;
  std::vector<std::unique_ptr<ProxyNode>> proxies_;
  std::unique_ptr<Coordinator> coordinator_;
  std::vector<HistoryOp> history_;
};

struct ScenarioReport {
  std::vector<WorkloadMetrics> phases;
  std::vector<TransitionTiming> transitions;
  LinearizabilityResult linearizability;
  ParityReport parity;
  bool views_agree = true;
  bool legal_transitions = true;
  std::size_t unreadable = 0;  // acked keys whose final GET disagreed
  bool ok() const {
    return linearizability.ok && parity.ok() && views_agree && legal_transitions && unreadable == 0;
  }
};

/// Every server's observed state sequence follows normal -> intermediate ->
/// degraded -> coordinated_normal -> normal, with increasing epochs.
bool transitions_legal(const std::vector<StateTransition>& history);

/// Loads the records, applies the script (times relative to the start of
/// the main phase, or of the load phase if `fail_before_load`), runs the
/// workload, waits for the cluster to settle, and verifies it.
ScenarioReport run_failure_scenario(SimCluster& cluster, const WorkloadSpec& spec,
                                    const std::vector<ScenarioDirective>& script,
                                    bool fail_before_load = false);

std::string format_report(const ScenarioReport& r);

}  // namespace eckv
