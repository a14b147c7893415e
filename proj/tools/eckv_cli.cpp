// eckv: redundancy analysis, benchmarks, failure scenarios and node processes.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <thread>

#include "eckv/redundancy.hpp"
#include "eckv/sim_cluster.hpp"
#include "eckv/tcp_cluster.hpp"

using namespace eckv;

namespace {

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct ClusterShape {
  std::string config_path;
  int servers = 16;
  int proxies = 4;
  int n = 10;
  int k = 8;
  int lists = 16;
  std::size_t chunk_size = kDefaultChunkSize;

  void add(CLI::App* app) {
    app->add_option("--config", config_path, "cluster config file (overrides the shape flags)");
    app->add_option("--servers", servers);
    app->add_option("--proxies", proxies);
    app->add_option("--n", n);
    app->add_option("--k", k);
    app->add_option("--lists", lists, "stripe lists");
    app->add_option("--chunk-size", chunk_size);
  }
  ClusterConfig build() const {
    if (!config_path.empty()) return load_cluster_config(config_path);
    ClusterConfig c = ClusterConfig::make(servers, proxies, n, k, lists);
    c.chunk_size = chunk_size;
    c.finalize();
    return c;
  }
};

// --- redundancy -------------------------------------------------------------

int cmd_redundancy(const RedundancyParams& p, const std::string& sweep) {
  p.validate();
  auto row = [](double v, const RedundancyReport& r) {
    std::printf("%8.0f %16.4f %16.4f %16.4f\n", v, r.all_replication, r.hybrid_encoding, r.all_encoding);
  };
  std::printf("%8s %16s %16s %16s\n", "V", "all-replication", "hybrid-encoding", "all-encoding");
  if (sweep.empty()) {
    row(p.V, redundancy_report(p));
    return 0;
  }
  int lo = 0, hi = 0;
  if (std::sscanf(sweep.c_str(), "V=%d..%d", &lo, &hi) != 2 || lo < 1 || hi < lo) {
    throw CLI::ValidationError("--sweep", "expected V=lo..hi");
  }
  // All-encoding's saving over each of the other two models.
  double best_rep = 0, best_hyb = 0, best_rep_v = lo, best_hyb_v = lo;
  for (const auto& pt : redundancy_sweep(p, lo, hi)) {
    row(pt.V, pt.report);
    const double vs_rep = 1 - pt.report.all_encoding / pt.report.all_replication;
    const double vs_hyb = 1 - pt.report.all_encoding / pt.report.hybrid_encoding;
    if (vs_rep > best_rep) best_rep = vs_rep, best_rep_v = pt.V;
    if (vs_hyb > best_hyb) best_hyb = vs_hyb, best_hyb_v = pt.V;
  }
  std::printf("max all-encoding reduction: %.1f%% vs all-replication at V=%.0f, %.1f%% vs hybrid-encoding at V=%.0f\n",
              100 * best_rep, best_rep_v, 100 * best_hyb, best_hyb_v);
  std::printf("all-encoding limit as V grows: %.4f\n", all_encoding_limit(p));
  return 0;
}

// --- bench --------------------------------------------------------------------

int cmd_bench(const ClusterShape& shape, const WorkloadSpec& spec, const std::string& transport,
              std::uint16_t base_port, const std::string& metrics_out) {
  spec.validate();
  ClusterConfig config = shape.build();
  std::vector<WorkloadMetrics> phases;
  WorkloadGenerator gen(spec);
  if (transport == "sim") {
    SimNetConfig net;
    net.seed = spec.seed;
    net.link_delay = DelayModel::normal(100, 30);
    SimCluster cluster(config, net);
    phases.push_back(cluster.load(gen, spec.clients));
    if (spec.name != "load") phases.push_back(cluster.run(gen, spec.ops, spec.clients));
  } else {
    assign_local_addresses(config, base_port);
    TcpCluster cluster(config);
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    phases.push_back(cluster.load(gen, spec.clients));
    if (spec.name != "load") phases.push_back(cluster.run(gen, spec.ops, spec.clients));
    cluster.stop();
  }
  std::string text;
  std::uint64_t failed = 0;
  for (const auto& m : phases) {
    text += format_metrics(m);
    failed += m.failed;
  }
  std::cout << text;
  if (!metrics_out.empty()) {
    std::ofstream out(metrics_out);
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
      if (line.rfind("metric ", 0) == 0) out << line.substr(7) << '\n';
    }
  }
  if (failed) std::cerr << failed << " requests failed\n";
  return 0;
}

// --- scenario -----------------------------------------------------------------

int cmd_scenario(const ClusterShape& shape, const WorkloadSpec& spec, const std::string& script_path,
                 bool before_load) {
  spec.validate();
  const auto script = parse_scenario(read_file(script_path));
  SimNetConfig net;
  net.seed = spec.seed;
  net.link_delay = DelayModel::normal(100, 30);
  SimCluster cluster(shape.build(), net);
  const ScenarioReport rep = run_failure_scenario(cluster, spec, script, before_load);
  std::cout << format_report(rep);
  return rep.ok() ? 0 : 2;
}

// --- line protocol ----------------------------------------------------------------

// Tokens are percent-escaped so keys and values may hold any byte.
std::string unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      out.push_back(static_cast<char>(std::stoi(s.substr(i + 1, 2), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

std::string escape(const std::string& s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (c > 0x20 && c < 0x7f && c != '%') {
      out.push_back(static_cast<char>(c));
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

const char* status_text(AckStatus s) {
  switch (s) {
    case AckStatus::ok: return "OK";
    case AckStatus::not_found: return "NOT_FOUND";
    case AckStatus::redirect: return "REDIRECT";
    case AckStatus::failed: break;
  }
  return "FAILED";
}

// SET k v / GET k / UPDATE k v / DELETE k / QUIT
void serve_lines(std::istream& in, std::ostream& out, const std::function<ClientResult(const Operation&)>& call) {
  for (std::string line; !g_stop && std::getline(in, line);) {
    std::istringstream words(line);
    std::string cmd, key, value;
    words >> cmd >> key >> value;
    if (cmd.empty() || cmd[0] == '#') continue;
    for (auto& ch : cmd) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (cmd == "QUIT") break;
    Operation op;
    op.key = unescape(key);
    op.value = unescape(value);
    if (cmd == "SET") op.type = OpType::set;
    else if (cmd == "GET") op.type = OpType::get;
    else if (cmd == "UPDATE") op.type = OpType::update;
    else if (cmd == "DELETE") op.type = OpType::del;
    else {
      out << "ERROR unknown command " << cmd << std::endl;
      continue;
    }
    if (key.empty() || ((op.type == OpType::set || op.type == OpType::update) && value.empty())) {
      out << "ERROR missing argument" << std::endl;
      continue;
    }
    try {
      const ClientResult r = call(op);
      out << status_text(r.status);
      if (op.type == OpType::get && r.ok()) out << ' ' << escape(r.value);
      out << std::endl;
    } catch (const std::exception& e) {
      out << "ERROR " << e.what() << std::endl;
    }
  }
}

void wait_for_shutdown() {
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

void require_tcp(const std::string& transport) {
  if (transport != "tcp") {
    throw CLI::ValidationError("--transport", "standalone nodes need tcp; use bench or scenario for sim");
  }
}

// --- cluster ----------------------------------------------------------------------

int cmd_cluster(const ClusterShape& shape, std::uint16_t base_port, const std::string& state_log) {
  ClusterConfig config = shape.build();
  assign_local_addresses(config, base_port);
  std::ofstream log;
  if (!state_log.empty()) log.open(state_log, std::ios::app);
  TcpCluster cluster(config, state_log.empty() ? nullptr : &log);
  std::cerr << "cluster up: " << config.servers.size() << " servers, " << config.proxies
            << " proxies; coordinator at " << config.addresses.at(kCoordinatorId) << '\n';
  serve_lines(std::cin, std::cout, [&](const Operation& op) { return cluster.call(0, op); });
  cluster.stop();
  return 0;
}

// --- single nodes ----------------------------------------------------------------

int cmd_server(ServerId id, const std::string& config_path, std::size_t mem_capacity,
               const std::string& checkpoint_dir, const std::string& transport, const std::string& listen) {
  require_tcp(transport);
  ClusterConfig config = load_cluster_config(config_path);
  if (!listen.empty()) config.addresses[id] = listen;
  if (mem_capacity) config.max_chunks = std::max<std::size_t>(1, mem_capacity / config.chunk_size);
  FileCheckpointStore checkpoints(checkpoint_dir);
  TcpTransport net(id, config.addresses);
  ServerNode node(id, config, net, checkpoints);
  net.start(&node);
  net.post([&] { node.start(); });
  std::cerr << "server " << id << " listening on " << config.addresses.at(id) << '\n';
  wait_for_shutdown();
  net.stop();
  return 0;
}

int cmd_proxy(NodeId id, const std::string& config_path, const std::string& coordinator,
              const std::string& transport) {
  require_tcp(transport);
  ClusterConfig config = load_cluster_config(config_path);
  if (!coordinator.empty()) config.addresses[kCoordinatorId] = coordinator;
  TcpTransport net(id, config.addresses);
  ProxyNode proxy(id, config, net);
  net.start(&proxy);
  serve_lines(std::cin, std::cout, [&](const Operation& op) {
    auto promise = std::make_shared<std::promise<ClientResult>>();
    auto future = promise->get_future();
    auto done = [promise](const ClientResult& r) { promise->set_value(r); };
    net.post([&, op, done] {
      switch (op.type) {
        case OpType::set: proxy.set(op.key, op.value, done); break;
        case OpType::get: proxy.get(op.key, done); break;
        case OpType::update: proxy.update(op.key, op.value, done); break;
        default: proxy.del(op.key, done); break;
      }
    });
    return future.get();
  });
  net.stop();
  return 0;
}

int cmd_coordinator(const std::string& config_path, const std::string& transport, const std::string& listen,
                    int heartbeat_ms, const std::string& state_log, const std::string& checkpoint_dir) {
  require_tcp(transport);
  ClusterConfig config = load_cluster_config(config_path);
  if (!listen.empty()) config.addresses[kCoordinatorId] = listen;
  if (heartbeat_ms > 0) config.heartbeat_interval = static_cast<VirtualTime>(heartbeat_ms) * kMillis;
  std::ofstream log;
  if (!state_log.empty()) log.open(state_log, std::ios::app);
  // Failed servers' checkpoints are read from the directory the servers write.
  FileCheckpointStore checkpoints(checkpoint_dir);
  TcpTransport net(kCoordinatorId, config.addresses);
  Coordinator coord(config, net, checkpoints, state_log.empty() ? nullptr : &log);
  net.start(&coord);
  net.post([&] { coord.start(); });
  wait_for_shutdown();
  net.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"Erasure-coded in-memory key-value store"};
  app.require_subcommand(1);

  RedundancyParams rp;
  std::string sweep;
  auto* red = app.add_subcommand("redundancy", "storage redundancy of the three data models");
  red->add_option("--K", rp.K, "key size");
  red->add_option("--V", rp.V, "value size");
  red->add_option("--M", rp.M, "metadata size");
  red->add_option("--R", rp.R, "index reference size");
  red->add_option("--C", rp.C, "chunk size");
  red->add_option("--I", rp.I, "chunk ID size");
  red->add_option("--O", rp.O, "index occupancy");
  red->add_option("--n", rp.n);
  red->add_option("--k", rp.k);
  red->add_option("--sweep", sweep, "V=lo..hi");

  ClusterShape shape;
  WorkloadSpec spec;
  std::string transport = "sim";
  int base_port = 17000;
  std::string metrics_out;
  auto add_workload = [&](CLI::App* sub) {
    sub->add_option("--workload", spec.name, "load, A, B, C, D or F")
        ->check(CLI::IsMember({"load", "A", "B", "C", "D", "F"}));
    sub->add_option("--records", spec.records);
    sub->add_option("--ops", spec.ops);
    sub->add_option("--seed", spec.seed);
    sub->add_option("--clients", spec.clients);
    sub->add_option("--theta", spec.theta, "zipf skew");
    shape.add(sub);
  };
  auto* bench = app.add_subcommand("bench", "load the cluster and run a workload");
  add_workload(bench);
  bench->add_option("--transport", transport)->check(CLI::IsMember({"sim", "tcp"}));
  bench->add_option("--base-port", base_port, "tcp: first port of the local cluster");
  bench->add_option("--metrics-out", metrics_out, "write one 'name value' line per metric");

  std::string script;
  bool before_load = false;
  auto* scen = app.add_subcommand("scenario", "run a scripted failure scenario on the simulator");
  add_workload(scen);
  scen->add_option("--script", script)->required();
  scen->add_flag("--before-load", before_load, "apply the script before the load phase");

  std::string state_log;
  auto* cluster = app.add_subcommand("cluster", "spawn a local tcp cluster and serve requests on stdin");
  shape.add(cluster);
  cluster->add_option("--base-port", base_port);
  cluster->add_option("--state-log", state_log);

  ServerId server_id = 0;
  std::string config_path, checkpoint_dir = "checkpoints", listen;
  std::size_t mem_capacity = 0;
  auto* server = app.add_subcommand("server", "run one server");
  server->add_option("--server-id", server_id)->required();
  server->add_option("--config", config_path)->required();
  server->add_option("--mem-capacity", mem_capacity, "bytes of chunk memory");
  server->add_option("--checkpoint-dir", checkpoint_dir);
  server->add_option("--transport", transport)->check(CLI::IsMember({"sim", "tcp"}));
  server->add_option("--listen", listen);

  NodeId proxy_id = kProxyIdBase;
  std::string coordinator_addr;
  auto* proxy = app.add_subcommand("proxy", "run one proxy; SET/GET/UPDATE/DELETE lines on stdin");
  proxy->add_option("--proxy-id", proxy_id)->required();
  proxy->add_option("--config", config_path)->required();
  proxy->add_option("--coordinator", coordinator_addr);
  proxy->add_option("--transport", transport)->check(CLI::IsMember({"sim", "tcp"}));

  int heartbeat_ms = 0;
  auto* coord = app.add_subcommand("coordinator", "run the coordinator");
  coord->add_option("--config", config_path)->required();
  coord->add_option("--transport", transport)->check(CLI::IsMember({"sim", "tcp"}));
  coord->add_option("--listen", listen);
  coord->add_option("--heartbeat-interval", heartbeat_ms, "milliseconds");
  coord->add_option("--state-log", state_log);
  coord->add_option("--checkpoint-dir", checkpoint_dir, "shared with the servers");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*red) return cmd_redundancy(rp, sweep);
    if (*bench) return cmd_bench(shape, spec, transport, static_cast<std::uint16_t>(base_port), metrics_out);
    if (*scen) return cmd_scenario(shape, spec, script, before_load);
    if (*cluster) return cmd_cluster(shape, static_cast<std::uint16_t>(base_port), state_log);
    if (*server) return cmd_server(server_id, config_path, mem_capacity, checkpoint_dir, transport, listen);
    if (*proxy) return cmd_proxy(proxy_id, config_path, coordinator_addr, transport);
    if (*coord) return cmd_coordinator(config_path, transport, listen, heartbeat_ms, state_log, checkpoint_dir);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
