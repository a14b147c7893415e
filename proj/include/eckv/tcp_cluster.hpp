#pragma once

#include <chrono>
#include <memory>
#include <ostream>
#include <vector>

#include "eckv/coordinator.hpp"
#include "eckv/proxy_node.hpp"
#include "eckv/server_node.hpp"
#include "eckv/sim_cluster.hpp"
#include "eckv/tcp_transport.hpp"
#include "eckv/workload.hpp"

namespace eckv {

/// Fills in 127.0.0.1 addresses for nodes that have none: server s on
/// base+s, proxy i on base+500+i, the coordinator on base+999.
void assign_local_addresses(ClusterConfig& config, std::uint16_t base_port);

/// Every node of a cluster in this process, each on its own TCP transport
/// and event-loop thread.
class TcpCluster {
 public:
  TcpCluster(ClusterConfig config, std::ostream* state_log = nullptr);
  ~TcpCluster();

  const ClusterConfig& config() const { return config_; }

  /// Runs one operation through proxy `p` and waits for the answer.
  ClientResult call(std::size_t p, const Operation& op,
                    std::chrono::milliseconds timeout = std::chrono::seconds(10));

  /// Closed-loop clients over wall-clock time.
  WorkloadMetrics load(WorkloadGenerator& gen, std::size_t clients);
  WorkloadMetrics run(WorkloadGenerator& gen, std::size_t ops, std::size_t clients);

  void stop();

 private:
  WorkloadMetrics drive(WorkloadGenerator& gen, std::size_t ops, std::size_t clients, bool load_phase);
  void issue(std::size_t p, const Operation& op, ClientCallback done);

  ClusterConfig config_;
  MemoryCheckpointStore checkpoints_;
  std::vector<std::unique_ptr<TcpTransport>> transports_;
  std::vector<std::unique_ptr<ServerNode>> servers_;
  std::vector<std::unique_ptr<ProxyNode>> proxies_;
  std::vector<TcpTransport*> proxy_transports_;
  std::unique_ptr<Coordinator> coordinator_;
  bool stopped_ = false;
};

}  // namespace eckv
