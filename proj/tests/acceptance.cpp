// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <unistd.h>

#include "eckv/cuckoo_index.hpp"
#include "eckv/erasure_codec.hpp"
#include "eckv/placement.hpp"
#include "eckv/redundancy.hpp"
#include "eckv/sim_cluster.hpp"
#include "eckv/tcp_cluster.hpp"

using namespace eckv;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::vector<ChunkBuffer> random_stripe(std::mt19937_64& rng, int k, std::size_t len) {
  std::vector<ChunkBuffer> data(k, ChunkBuffer(len));
  for (auto& c : data) {
    for (auto& b : c) b = static_cast<std::uint8_t>(rng());
  }
  return data;
}

// Written out from the model definitions, independent of the library.
struct Formulas {
  double K, V, M = 4, R = 8, C = 4096, I = 8, O = 0.9;
  int n = 10, k = 8;
  double obj() const { return K + V + M; }
  double all_replication() const { return (n - k + 1) * (obj() + R) / obj(); }
  double hybrid() const { return ((n - k + 1) * (K + M + R) + n * V / k) / obj(); }
  double all_encoding() const {
    const double per_chunk = n * (I + R / O) / (k * C / obj());
    return (n * obj() / k + R / O + per_chunk) / obj();
  }
};

void criterion1(Verdict& v) {
  double lo[3] = {1e9, 1e9, 1e9}, hi[3] = {0, 0, 0};
  int outside = 0;
  std::ostringstream where;
  for (int V = 1; V <= 10; ++V) {
    RedundancyParams p;
    p.K = 8;
    p.V = V;
    const auto r = redundancy_report(p);
    const Formulas f{8, double(V)};
    const double got[3] = {r.all_replication, r.hybrid_encoding, r.all_encoding};
    const double want[3] = {f.all_replication(), f.hybrid(), f.all_encoding()};
    const double band_lo[3] = {4.09, 3.29, 1.65}, band_hi[3] = {4.81, 4.72, 1.90};
    const char* names[3] = {"all-replication", "hybrid", "all-encoding"};
    for (int m = 0; m < 3; ++m) {
      v.require(std::abs(got[m] - want[m]) < 1e-12, "library disagrees with formula oracle");
      lo[m] = std::min(lo[m], got[m]);
      hi[m] = std::max(hi[m], got[m]);
      if (got[m] < band_lo[m] || got[m] > band_hi[m]) {
        ++outside;
        where << " " << names[m] << "(V=" << V << ")=" << fmt(got[m]);
      }
    }
  }
  v.detail << "V=1..10 all-rep " << fmt(lo[0]) << ".." << fmt(hi[0]) << ", hybrid " << fmt(lo[1]) << ".."
           << fmt(hi[1]) << ", all-enc " << fmt(lo[2]) << ".." << fmt(hi[2]) << ";";
  v.require(outside == 0, "outside [4.09,4.81]/[3.29,4.72]/[1.65,1.90]:" + where.str());

  // Rounded bands 4.1-4.8, 3.3-4.7, 1.7-1.9 with 0.06 slack, reported for context.
  const double paper_lo[3] = {4.1, 3.3, 1.7}, paper_hi[3] = {4.8, 4.7, 1.9};
  bool rounded = true;
  for (int m = 0; m < 3; ++m) {
    rounded = rounded && std::abs(lo[m] - paper_lo[m]) <= 0.06 && std::abs(hi[m] - paper_hi[m]) <= 0.06;
  }
  v.detail << " endpoints within 0.06 of rounded bands: " << (rounded ? "yes" : "no") << ";";

  RedundancyParams p;
  p.K = 8;
  const auto hybrid_v = first_value_size_at_or_below(p, DataModel::hybrid_encoding, 1.30, 1, 5000);
  v.detail << " hybrid<=1.30 from V=" << (hybrid_v ? std::to_string(*hybrid_v) : "none") << ";";
  v.require(hybrid_v && std::abs(*hybrid_v - 890) <= 5, "hybrid crossing not at 890+-5");
  p.V = 180;
  const double ae = redundancy_report(p).all_encoding;
  v.detail << " all-enc(V=180)=" << fmt(ae);
  v.require(ae <= 1.302, "all-encoding at V=180 above 1.302");
  v.require(std::abs(ae - 1.3015) / 1.3015 <= 0.002, "all-encoding at V=180 not within 0.2% of 1.3015");
}

void criterion2(Verdict& v) {
  std::mt19937_64 rng(2);
  std::size_t decodes = 0;
  for (auto [n, k] : {std::pair{10, 8}, std::pair{14, 10}, std::pair{3, 2}}) {
    ErasureCodec codec({n, k});
    std::size_t bad = 0;
    for (int s = 0; s < 100; ++s) {
      const auto data = random_stripe(rng, k, 64);
      const auto parity = codec.encode(data);
      for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (std::popcount(mask) > n - k) continue;
        std::map<int, ChunkBuffer> avail;
        for (int i = 0; i < n; ++i) {
          if (!(mask & (1u << i))) avail[i] = i < k ? data[i] : parity[i - k];
        }
        ++decodes;
        if (codec.decode(avail) != data) ++bad;
      }
    }
    v.require(bad == 0, "(" + std::to_string(n) + "," + std::to_string(k) + ") " + std::to_string(bad) +
                            " wrong decodes");
  }
  v.detail << decodes << " decodes over (10,8), (14,10), (3,2), 100 stripes each";
}

void criterion3(Verdict& v) {
  std::mt19937_64 rng(3);
  const std::pair<int, int> codes[] = {{10, 8}, {14, 10}, {3, 2}};
  std::size_t updates = 0, bad = 0;
  for (int seq = 0; seq < 1000; ++seq) {
    const auto [n, k] = codes[seq % 3];
    const CodeConfig cfg{n, k, seq % 6 == 5 && n == 3 ? CodeScheme::single_parity_xor : CodeScheme::reed_solomon};
    ErasureCodec codec(cfg);
    auto data = random_stripe(rng, k, 256);
    auto parity = codec.encode(data);
    const int steps = 1 + static_cast<int>(rng() % 20);
    for (int s = 0; s < steps; ++s) {
      const int d = static_cast<int>(rng() % k);
      const std::size_t len = 1 + rng() % 64;
      const std::size_t off = rng() % (256 - len + 1);
      std::vector<std::uint8_t> fresh(len);
      for (auto& b : fresh) b = static_cast<std::uint8_t>(rng());
      const auto delta = compute_delta(std::span(data[d]).subspan(off, len), fresh, off);
      std::copy(fresh.begin(), fresh.end(), data[d].begin() + static_cast<long>(off));
      for (int p = 0; p < n - k; ++p) codec.apply_delta_in_place(parity[p], k + p, d, delta);
      ++updates;
    }
    if (parity != codec.encode(data)) ++bad;
  }
  v.detail << "1000 sequences, " << updates << " updates, " << bad << " mismatches";
  v.require(bad == 0, "delta-maintained parity differs from re-encode");
}

void criterion4(Verdict& v) {
  std::vector<ServerId> servers(16);
  std::iota(servers.begin(), servers.end(), 0);
  const auto a = generate_stripe_lists(servers, 10, 8, 16);
  const auto b = generate_stripe_lists(servers, 10, 8, 16);
  v.require(a == b, "output not deterministic");
  std::map<ServerId, int> load;
  for (auto s : servers) load[s] = 0;
  for (const auto& l : a) {
    std::set<ServerId> members(l.data_servers.begin(), l.data_servers.end());
    members.insert(l.parity_servers.begin(), l.parity_servers.end());
    v.require(members.size() == 10, "list with repeated servers");
    for (auto s : l.data_servers) load[s] += 1;
    for (auto s : l.parity_servers) load[s] += 8;
  }
  int mn = 1 << 30, mx = 0;
  for (auto& [s, l] : load) {
    mn = std::min(mn, l);
    mx = std::max(mx, l);
  }
  v.detail << a.size() << " lists, load " << mn << ".." << mx << ", spread " << (mx - mn) << " (k=8)";
  v.require(a.size() == 16, "wrong list count");
  v.require(mx - mn <= 8, "spread above k");
}

void criterion5(Verdict& v) {
  double worst = 1;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    CuckooIndex<std::uint64_t, std::uint32_t> index(4096, rng(), rng());
    std::uint32_t i = 0;
    while (index.insert(rng(), i) != InsertResult::table_full) ++i;
    worst = std::min(worst, index.load_factor());
  }
  v.detail << "lowest load factor at first failure over 20 seeds: " << fmt(worst);
  v.require(worst >= 0.90, "below 0.90");
}

// Closed-loop clients issuing `total` operations; hook(i) runs just before the i-th.
void drive(SimCluster& c, std::size_t total, std::size_t clients, const std::function<Operation(std::size_t)>& next,
           const std::function<void(std::size_t)>& hook = {}) {
  std::size_t issued = 0;
  std::function<void(std::size_t)> step = [&](std::size_t id) {
    if (issued >= total) return;
    const std::size_t i = issued++;
    if (hook) hook(i);
    c.issue(id % c.proxy_count(), next(i), [&step, id](const ClientResult&) { step(id); });
  };
  for (std::size_t id = 0; id < clients; ++id) step(id);
  c.run_until_idle();
}

bool read_back(SimCluster& c, const std::set<std::string>& keys) {
  bool ok = true;
  std::size_t i = 0;
  for (const auto& k : keys) ok = c.call(i++ % c.proxy_count(), Operation{OpType::get, k, {}}).status != AckStatus::failed && ok;
  return ok;
}

void criterion6(Verdict& v) {
  SimNetConfig net;
  net.seed = 6;
  net.link_delay = DelayModel::normal(100, 30);
  SimCluster c(ClusterConfig::make(16, 4, 10, 8, 16), net);
  WorkloadSpec a;
  a.name = "A";
  a.records = 2000;
  a.seed = 6;
  WorkloadSpec cspec = a;
  cspec.name = "C";
  WorkloadGenerator ga(a), gc(cspec);
  c.load(ga, 16);
  const ServerId f = 7;
  drive(
      c, 40000, 16, [&](std::size_t i) { return (i / 5000) % 2 == 0 ? ga.next() : gc.next(); },
      [&](std::size_t i) {
        if (i == 12000) {
          c.fail(f);
          c.coordinator().declare_failed({f});
        }
        if (i == 22000) c.restore(f);
      });
  c.settle();
  std::set<std::string> keys;
  for (const auto& h : c.history()) keys.insert(h.key);
  const bool readable = read_back(c, keys);

  const auto lin = check_history(c.history());
  const auto& timings = c.coordinator().timings();
  std::size_t during[2] = {0, 0};
  bool saw[2] = {false, false};
  for (const auto& t : timings) {
    saw[t.to_degraded ? 0 : 1] = true;
    for (const auto& h : c.history()) {
      if (h.call < t.end && h.ret > t.start) ++during[t.to_degraded ? 0 : 1];
    }
  }
  std::size_t failed = 0;
  for (const auto& h : c.history()) failed += h.status == AckStatus::failed;
  v.detail << c.history().size() << " ops on " << lin.keys << " keys, " << lin.violating_keys.size()
           << " violating keys, " << failed << " failed; ops overlapping N->D " << during[0] << ", D->N "
           << during[1];
  v.require(lin.ok, "linearizability violation");
  v.require(readable, "final read failed");
  v.require(saw[0] && saw[1], "fail/restore cycle did not complete");
  v.require(during[0] > 0 && during[1] > 0, "no traffic during a transition");
  v.require(c.views_agree(), "views disagree");
  v.require(transitions_legal(c.coordinator().history()), "illegal transition sequence");
}

void criterion7(Verdict& v) {
  const ClusterConfig cfg = ClusterConfig::make(16, 4, 10, 8, 16);
  const auto members = cfg.list(0).members();
  std::vector<std::set<ServerId>> patterns;
  for (std::size_t i = 0; i < members.size(); ++i) {
    patterns.push_back({members[i]});
    for (std::size_t j = i + 1; j < members.size(); ++j) patterns.push_back({members[i], members[j]});
  }
  WorkloadSpec spec;
  spec.name = "load";
  spec.records = 10000;
  spec.seed = 7;
  std::vector<Operation> originals;
  {
    WorkloadGenerator gen(spec);
    for (std::uint64_t i = 0; i < spec.records; ++i) originals.push_back(gen.load_op(i));
  }
  std::size_t reads = 0, wrong = 0, reconstructions = 0;
  for (const auto& pattern : patterns) {
    SimCluster c(cfg);
    WorkloadGenerator gen(spec);
    c.load(gen, 16);
    c.flush_seals();
    for (auto s : pattern) c.fail(s);
    c.coordinator().declare_failed(pattern);
    for (auto s : pattern) c.wait_for_state(s, ServerState::degraded);
    c.net().run_until_quiescent();
    std::vector<ClientResult> results(originals.size());
    std::size_t next = 0;
    std::function<void(std::size_t)> step = [&](std::size_t id) {
      if (next >= originals.size()) return;
      const std::size_t i = next++;
      c.issue(id % c.proxy_count(), Operation{OpType::get, originals[i].key, {}}, [&, i, id](const ClientResult& r) {
        results[i] = r;
        step(id);
      });
    };
    for (std::size_t id = 0; id < 32; ++id) step(id);
    c.run_until_idle();
    for (std::size_t i = 0; i < originals.size(); ++i) {
      ++reads;
      if (results[i].status != AckStatus::ok || results[i].value != originals[i].value) ++wrong;
    }
    for (ServerId s : cfg.servers) reconstructions += c.server(s).stats().reconstructions;
  }
  v.detail << patterns.size() << " failure patterns on list 0, " << reads << " degraded-mode GETs, " << wrong
           << " wrong, " << reconstructions << " chunk reconstructions";
  v.require(patterns.size() == 55, "expected 10 single + 45 double patterns");
  v.require(wrong == 0, "unreadable or altered objects");
}

void criterion8(Verdict& v) {
  SimCluster c(ClusterConfig::make(16, 4, 10, 8, 16));
  WorkloadSpec spec;
  spec.name = "load";
  spec.records = 3000;
  spec.seed = 8;
  WorkloadGenerator gen(spec);
  c.load(gen, 16);
  c.flush_seals();

  // A sealed object and its stripe.
  Operation target;
  std::optional<LocatedObject> loc;
  for (std::uint64_t i = 0; i < spec.records && !(loc && loc->sealed); ++i) {
    target = WorkloadGenerator(spec).load_op(i);
    const auto p = map_key(target.key, c.config().lists);
    loc = c.server(p.data_server).store().find(whole_index_key(target.key));
  }
  const auto place = map_key(target.key, c.config().lists);
  const ServerId ds = place.data_server;
  const StripeList& list = c.config().list(place.stripe_list);
  const ServerId fast = list.parity_servers[0], slow = list.parity_servers[1];

  // The second parity's copy of the delta is still in flight when the data
  // server dies, so it is lost; the first parity has applied it.
  c.net().set_link_delay(ds, slow, DelayModel::fixed(50 * kMillis));
  bool killed = false;
  c.net().on_deliver = [&](VirtualTime, NodeId from, NodeId to, const Message& m) {
    if (!killed && from == ds && to == fast && m.kind == MessageKind::delta_apply) {
      killed = true;
      c.net().schedule(kHarnessNode, 1, [&] {
        c.fail(ds);
        c.coordinator().declare_failed({ds});
      });
    }
  };
  const auto applied_before = c.server(fast).stats().deltas_applied + c.server(slow).stats().deltas_applied;
  std::string fresh(target.value.size(), 'u');
  fresh[0] = 'U';
  std::optional<ClientResult> result;
  c.issue(0, Operation{OpType::update, target.key, fresh}, [&](const ClientResult& r) { result = r; });
  c.run_until_idle();
  c.net().run_until_quiescent();
  c.net().on_deliver = nullptr;

  std::uint64_t reverts = 0, replays = 0;
  for (ServerId s : list.parity_servers) reverts += c.server(s).stats().reverts;
  for (std::size_t p = 0; p < c.proxy_count(); ++p) replays += c.proxy(p).stats().replays;
  const auto applied = c.server(fast).stats().deltas_applied + c.server(slow).stats().deltas_applied - applied_before;
  const bool update_ok = result && result->status == AckStatus::ok;
  const auto degraded_read = c.call(1, Operation{OpType::get, target.key, {}});

  // Rejoin so every data chunk is back on its home server, then re-encode.
  c.restore(ds);
  c.settle();
  c.flush_seals();
  const auto parity = c.check_parity();
  const auto final_read = c.call(2, Operation{OpType::get, target.key, {}});

  v.detail << "partial update applied on 1 of 2 parities; parity reverts " << reverts << ", replays " << replays
           << ", parity deltas applied " << applied << ", stripes checked " << parity.stripes << ", mismatches "
           << parity.mismatches;
  v.require(killed, "data server never failed mid-update");
  v.require(update_ok, "replayed update not acknowledged");
  v.require(reverts == 1, "expected exactly one revert");
  v.require(replays == 1, "expected exactly one replay");
  v.require(applied == 3, "expected 1 partial + 2 replayed parity deltas");
  v.require(degraded_read.value == fresh && final_read.value == fresh, "value after replay wrong");
  v.require(parity.ok(), "parity inconsistent after rollback and replay");
}

struct Background {
  SimCluster& c;
  WorkloadGenerator gen;
  bool stop = false;
  std::function<void(std::size_t)> step;
  Background(SimCluster& cluster, WorkloadSpec spec) : c(cluster), gen(spec) {
    step = [this](std::size_t id) {
      if (stop) return;
      c.issue(id % c.proxy_count(), gen.next(), [this, id](const ClientResult&) { step(id); });
    };
  }
  void start(std::size_t clients) {
    for (std::size_t id = 0; id < clients; ++id) step(id);
  }
};

void criterion9(Verdict& v) {
  const ClusterConfig cfg = ClusterConfig::make(16, 4, 10, 8, 16);
  WorkloadSpec spec;
  spec.name = "A";
  spec.records = 500;
  std::size_t livelocks = 0, disagreements = 0, unmigrated = 0, buffers = 0, slower_idle = 0, completed = 0;
  double sum_idle = 0, sum_busy = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    SimNetConfig net;
    net.seed = seed;
    net.link_delay = DelayModel::normal(100, 30);
    std::mt19937_64 rng(seed);
    const ServerId f = static_cast<ServerId>(rng() % 16);
    spec.seed = seed;
    try {
      SimCluster c(cfg, net);
      WorkloadGenerator gen(spec);
      c.load(gen, 8);
      Background bg(c, spec);
      bg.start(8);
      c.net().run_until(c.net().now() + static_cast<VirtualTime>(rng() % 50) * kMillis);
      c.fail(f);
      c.wait_for_state(f, ServerState::degraded, 60 * kSeconds);
      bg.stop = true;
      c.run_until_idle();
      c.net().run_until_quiescent();
      disagreements += !c.views_agree();

      std::vector<std::string> redirected;
      for (int i = 0; redirected.size() < 20; ++i) {
        const std::string key = "migrate-" + std::to_string(seed) + "-" + std::to_string(i);
        if (map_key(key, cfg.lists).data_server != f) continue;
        if (c.call(i % 4, Operation{OpType::set, key, "m" + std::to_string(i)}).ok()) redirected.push_back(key);
      }
      c.restore(f);
      c.settle();
      disagreements += !c.views_agree();
      for (ServerId s : cfg.servers) buffers += c.server(s).redirect_buffer_size();
      for (std::size_t i = 0; i < redirected.size(); ++i) {
        const bool home = c.server(f).store().find(whole_index_key(redirected[i])).has_value();
        const bool served = c.call(i % 4, Operation{OpType::get, redirected[i], {}}).ok();
        unmigrated += !(home && served);
      }
      bool down = false, up = false;
      for (const auto& t : c.coordinator().timings()) (t.to_degraded ? down : up) = true;
      completed += down && up && redirected.size() == 20;

      // Matched pair: same seed and failure, idle versus busy at announce time.
      VirtualTime t_idle = 0, t_busy = 0;
      {
        SimCluster idle(cfg, net);
        WorkloadGenerator g(spec);
        idle.load(g, 8);
        idle.net().run_until_quiescent();
        idle.fail(f);
        idle.coordinator().declare_failed({f});
        idle.wait_for_state(f, ServerState::degraded);
        t_idle = idle.coordinator().timings().at(0).elapsed();
      }
      {
        SimCluster busy(cfg, net);
        WorkloadGenerator g(spec);
        busy.load(g, 8);
        Background load(busy, spec);
        load.start(16);
        busy.net().run_until(busy.net().now() + 5 * kMillis);
        busy.fail(f);
        busy.coordinator().declare_failed({f});
        busy.wait_for_state(f, ServerState::degraded);
        load.stop = true;
        busy.run_until_idle();
        t_busy = busy.coordinator().timings().at(0).elapsed();
      }
      sum_idle += static_cast<double>(t_idle);
      sum_busy += static_cast<double>(t_busy);
      slower_idle += t_busy < t_idle;
    } catch (const LivelockError&) {
      ++livelocks;
    }
  }
  v.detail << "50 seeds: " << completed << " full cycles, " << livelocks << " livelocks, " << disagreements
           << " view disagreements, " << unmigrated << " unmigrated keys, " << buffers
           << " buffered entries left; mean T_N->D idle " << fmt(sum_idle / 50 / 1000, 3) << " ms, busy "
           << fmt(sum_busy / 50 / 1000, 3) << " ms (virtual)";
  v.require(livelocks == 0, "livelock");
  v.require(completed == 50, "incomplete cycles");
  v.require(disagreements == 0, "views disagree");
  v.require(unmigrated == 0 && buffers == 0, "migration incomplete");
  v.require(slower_idle == 0, "T_N->D with in-flight requests shorter than without");
}

void criterion10(Verdict& v) {
  SimNetConfig net;
  net.link_delay = DelayModel::normal(100, 30);
  SimCluster c(ClusterConfig::make(16, 4, 10, 8, 16), net);
  WorkloadSpec spec;
  spec.records = 2000;
  WorkloadGenerator gen(spec);
  const auto load = c.load(gen, 16);
  v.require(load.ops == 2000 && load.throughput > 0, "sim load phase");
  std::uint64_t prev_completed = 0;
  bool monotone = true;
  v.detail << "sim:";
  for (std::size_t ops : {1000u, 2000u, 4000u}) {
    const auto m = c.run(gen, ops, 16);
    std::uint64_t completed = 0, counted = 0;
    for (std::size_t p = 0; p < c.proxy_count(); ++p) completed += c.proxy(p).stats().completed;
    for (auto& [name, n] : m.counts) counted += n;
    monotone = monotone && completed > prev_completed && m.ops == ops && counted >= ops;
    prev_completed = completed;
    v.require(m.throughput > 0 && m.failed == 0, "sim phase throughput or failures");
    v.detail << " " << ops << " ops at " << fmt(m.throughput, 0) << " op/s";
  }
  v.require(monotone, "op counts not monotone");

  try {
    ClusterConfig tcfg = ClusterConfig::make(6, 2, 4, 2, 4);
    assign_local_addresses(tcfg, static_cast<std::uint16_t>(20000 + (getpid() % 200) * 100));
    TcpCluster t(tcfg);
    WorkloadSpec ts;
    ts.records = 200;
    WorkloadGenerator tg(ts);
    const auto tl = t.load(tg, 4);
    const auto tm = t.run(tg, 500, 4);
    t.stop();
    v.detail << "; tcp: " << tm.ops << " ops at " << fmt(tm.throughput, 0) << " op/s";
    v.require(tl.ops == 200 && tm.ops == 500 && tm.throughput > 0 && tm.failed == 0, "tcp smoke run");
  } catch (const std::exception& e) {
    v.require(false, std::string("tcp smoke run: ") + e.what());
  }
}

}  // namespace

int main() {
  struct Entry {
    int id;
    double limit_s;
    void (*fn)(Verdict&);
  };
  const Entry entries[] = {{1, 1, criterion1},    {2, 30, criterion2},   {3, 30, criterion3},  {4, 1, criterion4},
                           {5, 30, criterion5},   {6, 300, criterion6},  {7, 300, criterion7}, {8, 60, criterion8},
                           {9, 300, criterion9},  {10, 300, criterion10}};
  int failures = 0;
  for (const auto& e : entries) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      e.fn(v);
    } catch (const std::exception& ex) {
      v.require(false, std::string("exception: ") + ex.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.require(secs < e.limit_s, "runtime above " + fmt(e.limit_s, 0) + "s");
    failures += !v.pass;
    std::printf("criterion %d: %s (%.2fs) %s\n", e.id, v.pass ? "PASS" : "FAIL", secs, v.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
