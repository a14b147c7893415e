#include "eckv/sim_cluster.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace eckv {
namespace {

double percentile(std::vector<VirtualTime>& v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const auto i = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1) + 0.5);
  return static_cast<double>(v[std::min(i, v.size() - 1)]);
}

bool same_view(const StateView& a, const StateView& b) {
  return a.epoch == b.epoch && a.states == b.states && a.redirects == b.redirects;
}

}  // namespace

SimCluster::SimCluster(ClusterConfig config, SimNetConfig net) : config_(std::move(config)), net_(net) {
  coordinator_ = std::make_unique<Coordinator>(config_, net_, checkpoints_, &state_log_);
  net_.attach(kCoordinatorId, coordinator_.get());
  for (ServerId s : config_.servers) {
    if (s != servers_.size()) throw ConfigError("simulated clusters need server IDs 0..S-1");
    servers_.push_back(std::make_unique<ServerNode>(s, config_, net_, checkpoints_));
    net_.attach(s, servers_.back().get());
  }
  for (NodeId p : config_.proxy_ids()) {
    proxies_.push_back(std::make_unique<ProxyNode>(p, config_, net_));
    net_.attach(p, proxies_.back().get());
  }
  coordinator_->start();
  for (auto& s : servers_) s->start();
}

void SimCluster::issue(std::size_t p, const Operation& op, ClientCallback done) {
  if (op.type == OpType::rmw) {
    issue(p, Operation{OpType::get, op.key, {}}, [this, p, op, done](const ClientResult& r) {
      if (!r.ok()) {
        if (done) done(r);
        return;
      }
      issue(p, Operation{OpType::update, op.key, op.value}, done);
    });
    return;
  }
  const std::size_t idx = history_.size();
  HistoryOp h;
  h.kind = op.type;
  h.key = op.key;
  h.input = op.value;
  h.call = net_.now();
  history_.push_back(h);
  auto cb = [this, idx, done](const ClientResult& r) {
    if (idx < history_.size()) {
      HistoryOp& h = history_[idx];
      h.ret = net_.now();
      h.status = r.status;
      h.output = r.value;
      h.unknown = r.status == AckStatus::failed && h.kind != OpType::get;
    }
    if (done) done(r);
  };
  ProxyNode& px = *proxies_.at(p % proxies_.size());
  switch (op.type) {
    case OpType::set: px.set(op.key, op.value, cb); break;
    case OpType::get: px.get(op.key, cb); break;
    case OpType::update: px.update(op.key, op.value, cb); break;
    case OpType::del: px.del(op.key, cb); break;
    case OpType::rmw: break;
  }
}

ClientResult SimCluster::call(std::size_t p, const Operation& op, VirtualTime horizon) {
  bool finished = false;
  ClientResult out;
  issue(p, op, [&](const ClientResult& r) {
    out = r;
    finished = true;
  });
  net_.run_while([&] { return !finished; }, horizon);
  return out;
}

std::size_t SimCluster::pending_requests() const {
  std::size_t n = 0;
  for (const auto& p : proxies_) n += p->pending();
  return n;
}

void SimCluster::run_until_idle(VirtualTime horizon) {
  net_.run_while([&] { return pending_requests() > 0; }, horizon);
}

void SimCluster::settle(VirtualTime horizon) {
  auto busy = [&] {
    if (pending_requests() > 0 || coordinator_->transition_in_progress() || !coordinator_->all_normal()) {
      return true;
    }
    for (const auto& s : servers_) {
      if (!net_.failed(s->id()) && s->migrating()) return true;
    }
    return net_.foreground_pending() > 0;
  };
  net_.run_while(busy, horizon);
}

void SimCluster::wait_for_state(ServerId s, ServerState st, VirtualTime horizon) {
  net_.run_while([&] { return coordinator_->state(s) != st; }, horizon);
}

void SimCluster::flush_seals() {
  for (auto& s : servers_) {
    if (!net_.failed(s->id())) s->flush();
  }
  net_.run_while([&] { return net_.foreground_pending() > 0; }, 600 * kSeconds);
}

bool SimCluster::views_agree() const {
  for (const auto& p : proxies_) {
    if (!same_view(p->view(), coordinator_->view())) return false;
  }
  return true;
}

ParityReport SimCluster::check_parity() const {
  ErasureCodec codec(config_.code);
  std::set<std::pair<std::uint16_t, std::uint64_t>> stripes;
  for (const auto& s : servers_) {
    for (const Chunk& c : s->store().chunks()) {
      if (c.sealed && !c.id.unsealed()) stripes.insert({c.id.stripe_list, c.id.stripe});
    }
    for (const ChunkId& id : s->parity_chunk_ids()) stripes.insert({id.stripe_list, id.stripe});
  }
  ParityReport rep;
  const int k = config_.code.k;
  for (const auto& [list_id, stripe] : stripes) {
    const StripeList& list = config_.list(list_id);
    std::vector<ChunkBuffer> data;
    for (int d = 0; d < k; ++d) {
      const ChunkId id{list_id, stripe, static_cast<std::uint8_t>(d)};
      const ChunkStore& store = servers_.at(list.data_servers[d])->store();
      if (auto ref = store.find_chunk(id)) data.push_back(store.chunk(*ref).content);
      else data.emplace_back(config_.chunk_size, 0);
    }
    const auto parity = codec.encode(data);
    ++rep.stripes;
    for (int p = 0; p < config_.code.n - k; ++p) {
      const ChunkId pid{list_id, stripe, static_cast<std::uint8_t>(k + p)};
      const ChunkBuffer* actual = servers_.at(list.parity_servers[p])->parity_chunk(pid);
      const bool match = actual ? *actual == parity[p]
                                : std::all_of(parity[p].begin(), parity[p].end(), [](auto b) { return b == 0; });
      if (!match) {
        ++rep.mismatches;
        if (rep.details.size() < 20) {
          rep.details.push_back(pid.to_string() + (actual ? " differs from re-encode" : " missing"));
        }
      }
    }
  }
  return rep;
}

WorkloadMetrics SimCluster::load(WorkloadGenerator& gen, std::size_t clients) {
  return drive(gen, gen.spec().records, clients, true);
}

WorkloadMetrics SimCluster::run(WorkloadGenerator& gen, std::size_t ops, std::size_t clients) {
  return drive(gen, ops, clients, false);
}

WorkloadMetrics SimCluster::drive(WorkloadGenerator& gen, std::size_t ops, std::size_t clients,
                                  bool load_phase) {
  WorkloadMetrics m;
  m.phase = load_phase ? "load" : gen.spec().name;
  std::size_t issued = 0;
  std::size_t done = 0;
  std::vector<VirtualTime> latencies;
  latencies.reserve(ops);
  std::function<void(std::size_t)> next = [&](std::size_t client) {
    if (issued >= ops) return;
    const Operation op = load_phase ? gen.load_op(issued) : gen.next();
    ++issued;
    ++m.counts[op_name(op.type)];
    const VirtualTime t0 = net_.now();
    issue(client, op, [&, client, t0](const ClientResult& r) {
      latencies.push_back(net_.now() - t0);
      if (r.status == AckStatus::failed) ++m.failed;
      ++done;
      next(client);
    });
  };
  const VirtualTime start = net_.now();
  for (std::size_t c = 0; c < std::max<std::size_t>(clients, 1); ++c) next(c);
  net_.run_while([&] { return done < issued; }, 3600 * kSeconds);
  m.ops = done;
  m.elapsed = net_.now() - start;
  m.throughput = m.elapsed ? static_cast<double>(done) * 1e6 / static_cast<double>(m.elapsed) : 0;
  m.p50_us = percentile(latencies, 0.50);
  m.p95_us = percentile(latencies, 0.95);
  m.p99_us = percentile(latencies, 0.99);
  return m;
}

std::string format_metrics(const WorkloadMetrics& m) {
  char buf[256];
  std::string out = "phase " + m.phase + "\n";
  std::snprintf(buf, sizeof buf,
                "  ops %llu  failed %llu  elapsed %.3f s  throughput %.1f ops/s\n"
                "  latency p50 %.0f us  p95 %.0f us  p99 %.0f us\n",
                static_cast<unsigned long long>(m.ops), static_cast<unsigned long long>(m.failed),
                static_cast<double>(m.elapsed) / 1e6, m.throughput, m.p50_us, m.p95_us, m.p99_us);
  out += buf;
  for (const auto& [name, n] : m.counts) {
    out += "  " + name + " " + std::to_string(n) + "\n";
  }
  out += "metric " + m.phase + ".ops " + std::to_string(m.ops) + "\n";
  out += "metric " + m.phase + ".failed " + std::to_string(m.failed) + "\n";
  out += "metric " + m.phase + ".elapsed_us " + std::to_string(m.elapsed) + "\n";
  std::snprintf(buf, sizeof buf, "metric %s.throughput %.3f\nmetric %s.p95_us %.0f\n", m.phase.c_str(),
                m.throughput, m.phase.c_str(), m.p95_us);
  out += buf;
  for (const auto& [name, n] : m.counts) {
    out += "metric " + m.phase + ".count." + name + " " + std::to_string(n) + "\n";
  }
  return out;
}

bool transitions_legal(const std::vector<StateTransition>& history) {
  std::map<ServerId, std::pair<ServerState, std::uint64_t>> last;
  for (const auto& t : history) {
    auto [it, fresh] = last.try_emplace(t.server, ServerState::normal, 0);
    if (next_state(it->second.first) != t.state) return false;
    if (!fresh && t.epoch <= it->second.second) return false;
    it->second = {t.state, t.epoch};
  }
  return true;
}

ScenarioReport run_failure_scenario(SimCluster& cluster, const WorkloadSpec& spec,
                                    const std::vector<ScenarioDirective>& script, bool fail_before_load) {
  ScenarioReport rep;
  WorkloadGenerator gen(spec);
  SimNetwork& net = cluster.net();
  auto apply = [&] {
    apply_scenario(net, script, [&](NodeId s) { cluster.fail(s); }, [&](NodeId s) { cluster.restore(s); });
  };
  VirtualTime script_end = 0;
  for (const auto& d : script) script_end = std::max(script_end, d.at);

  VirtualTime origin = net.now();
  if (fail_before_load) apply();
  rep.phases.push_back(cluster.load(gen, spec.clients));
  if (!fail_before_load) {
    origin = net.now();
    apply();
  }
  if (spec.name != "load") rep.phases.push_back(cluster.run(gen, spec.ops, spec.clients));
  if (net.now() < origin + script_end) net.run_until(origin + script_end);
  cluster.settle();

  // Read back every key the history touched so lost acknowledged writes
  // show up as linearizability violations.
  std::set<std::string> keys;
  for (const auto& h : cluster.history()) keys.insert(h.key);
  std::size_t i = 0;
  for (const auto& key : keys) {
    const ClientResult r = cluster.call(i++, Operation{OpType::get, key, {}});
    if (r.status == AckStatus::failed) ++rep.unreadable;
  }
  rep.linearizability = check_history(cluster.history());
  rep.parity = cluster.check_parity();
  rep.views_agree = cluster.views_agree();
  rep.legal_transitions = transitions_legal(cluster.coordinator().history());
  rep.transitions = cluster.coordinator().timings();
  return rep;
}

std::string format_report(const ScenarioReport& r) {
  std::string out;
  for (const auto& m : r.phases) out += format_metrics(m);
  for (const auto& t : r.transitions) {
    std::string servers;
    for (auto s : t.servers) servers += (servers.empty() ? "" : ",") + std::to_string(s);
    char buf[160];
    std::snprintf(buf, sizeof buf, "transition %s servers %s start %.3f s elapsed %.3f ms\n",
                  t.to_degraded ? "normal->degraded" : "degraded->normal", servers.c_str(),
                  static_cast<double>(t.start) / 1e6, static_cast<double>(t.elapsed()) / 1e3);
    out += buf;
  }
  out += "linearizable " + std::string(r.linearizability.ok ? "yes" : "NO") + " (" +
         std::to_string(r.linearizability.keys) + " keys, " + std::to_string(r.linearizability.ops) + " ops)\n";
  for (const auto& k : r.linearizability.violating_keys) out += "  violation on key " + k + "\n";
  out += "parity " + std::string(r.parity.ok() ? "consistent" : "INCONSISTENT") + " (" +
         std::to_string(r.parity.stripes) + " stripes, " + std::to_string(r.parity.mismatches) + " mismatches)\n";
  for (const auto& d : r.parity.details) out += "  " + d + "\n";
  out += "views " + std::string(r.views_agree ? "agree" : "DISAGREE") + "\n";
  out += "transitions " + std::string(r.legal_transitions ? "legal" : "ILLEGAL") + "\n";
  out += "unreadable " + std::to_string(r.unreadable) + "\n";
  out += std::string("verdict ") + (r.ok() ? "PASS" : "FAIL") + "\n";
  return out;
}

}  // namespace eckv
