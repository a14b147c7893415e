#include "eckv/tcp_cluster.hpp"

#include <algorithm>
#include <condition_variable>
#include <future>
#include <mutex>

namespace eckv {

void assign_local_addresses(ClusterConfig& config, std::uint16_t base_port) {
  auto put = [&](NodeId id, int offset) {
    if (!config.addresses.count(id)) {
      config.addresses[id] = "127.0.0.1:" + std::to_string(base_port + offset);
    }
  };
  for (ServerId s : config.servers) put(s, static_cast<int>(s));
  const auto proxies = config.proxy_ids();
  for (std::size_t i = 0; i < proxies.size(); ++i) put(proxies[i], 500 + static_cast<int>(i));
  put(kCoordinatorId, 999);
}

TcpCluster::TcpCluster(ClusterConfig config, std::ostream* state_log) : config_(std::move(config)) {
  auto transport = [&](NodeId id) {
    transports_.push_back(std::make_unique<TcpTransport>(id, config_.addresses));
    return transports_.back().get();
  };
  TcpTransport* coord_net = transport(kCoordinatorId);
  coordinator_ = std::make_unique<Coordinator>(config_, *coord_net, checkpoints_, state_log);
  std::vector<TcpTransport*> server_nets;
  for (ServerId s : config_.servers) {
    server_nets.push_back(transport(s));
    servers_.push_back(std::make_unique<ServerNode>(s, config_, *server_nets.back(), checkpoints_));
  }
  for (NodeId p : config_.proxy_ids()) {
    proxy_transports_.push_back(transport(p));
    proxies_.push_back(std::make_unique<ProxyNode>(p, config_, *proxy_transports_.back()));
  }
  // Listen everywhere before anything starts sending.
  coord_net->start(coordinator_.get());
  for (std::size_t i = 0; i < servers_.size(); ++i) server_nets[i]->start(servers_[i].get());
  for (std::size_t i = 0; i < proxies_.size(); ++i) proxy_transports_[i]->start(proxies_[i].get());
  coord_net->post([c = coordinator_.get()] { c->start(); });
  for (std::size_t i = 0; i < servers_.size(); ++i) {
    server_nets[i]->post([s = servers_[i].get()] { s->start(); });
  }
}

TcpCluster::~TcpCluster() { stop(); }

void TcpCluster::stop() {
  if (stopped_) return;
  stopped_ = true;
  for (auto& t : transports_) t->stop();
}

void TcpCluster::issue(std::size_t p, const Operation& op, ClientCallback done) {
  const std::size_t i = p % proxies_.size();
  ProxyNode* px = proxies_[i].get();
  proxy_transports_[i]->post([this, p, px, op, done] {
    switch (op.type) {
      case OpType::set: px->set(op.key, op.value, done); break;
      case OpType::get: px->get(op.key, done); break;
      case OpType::update: px->update(op.key, op.value, done); break;
      case OpType::del: px->del(op.key, done); break;
      case OpType::rmw:
        px->get(op.key, [this, p, op, done](const ClientResult& r) {
          if (!r.ok()) {
            done(r);
            return;
          }
          issue(p, Operation{OpType::update, op.key, op.value}, done);
        });
        break;
    }
  });
}

ClientResult TcpCluster::call(std::size_t p, const Operation& op, std::chrono::milliseconds timeout) {
  auto promise = std::make_shared<std::promise<ClientResult>>();
  auto future = promise->get_future();
  issue(p, op, [promise](const ClientResult& r) { promise->set_value(r); });
  if (future.wait_for(timeout) != std::future_status::ready) {
    throw TransportError("request timed out");
  }
  return future.get();
}

WorkloadMetrics TcpCluster::load(WorkloadGenerator& gen, std::size_t clients) {
  return drive(gen, gen.spec().records, clients, true);
}

WorkloadMetrics TcpCluster::run(WorkloadGenerator& gen, std::size_t ops, std::size_t clients) {
  return drive(gen, ops, clients, false);
}

WorkloadMetrics TcpCluster::drive(WorkloadGenerator& gen, std::size_t ops, std::size_t clients,
                                  bool load_phase) {
  using Clock = std::chrono::steady_clock;
  WorkloadMetrics m;
  m.phase = load_phase ? "load" : gen.spec().name;
  std::mutex mu;
  std::condition_variable cv;
  std::size_t issued = 0;
  std::size_t done = 0;
  std::size_t active = std::max<std::size_t>(clients, 1);
  std::vector<VirtualTime> latencies;
  latencies.reserve(ops);

  std::function<void(std::size_t)> next = [&](std::size_t client) {
    Operation op;
    {
      std::lock_guard lock(mu);
      if (issued >= ops) {
        if (--active == 0) cv.notify_all();
        return;
      }
      op = load_phase ? gen.load_op(issued) : gen.next();
      ++issued;
      ++m.counts[op_name(op.type)];
    }
    const auto t0 = Clock::now();
    issue(client, op, [&, client, t0](const ClientResult& r) {
      {
        std::lock_guard lock(mu);
        latencies.push_back(
            std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0).count());
        if (r.status == AckStatus::failed) ++m.failed;
        ++done;
      }
      next(client);
    });
  };

  const auto start = Clock::now();
  const std::size_t n = active;
  for (std::size_t c = 0; c < n; ++c) next(c);
  {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return active == 0; });
  }
  m.ops = done;
  m.elapsed = std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start).count();
  m.throughput = m.elapsed ? static_cast<double>(done) * 1e6 / static_cast<double>(m.elapsed) : 0;
  std::sort(latencies.begin(), latencies.end());
  auto pct = [&](double q) {
    if (latencies.empty()) return 0.0;
    const auto i = static_cast<std::size_t>(q * static_cast<double>(latencies.size() - 1) + 0.5);
    return static_cast<double>(latencies[std::min(i, latencies.size() - 1)]);
  };
  m.p50_us = pct(0.50);
  m.p95_us = pct(0.95);
  m.p99_us = pct(0.99);
  return m;
}

}  // namespace eckv
