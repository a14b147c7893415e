#include <doctest.h>

#include <cmath>
#include <random>

#include "eckv/linearizability.hpp"
#include "eckv/redundancy.hpp"
#include "eckv/sim_network.hpp"
#include "eckv/workload.hpp"

using namespace eckv;

namespace {

struct Recorder : MessageHandler {
  std::vector<std::pair<VirtualTime, Message>> got;
  SimNetwork* net = nullptr;
  int restarts = 0;
  void on_message(NodeId, Message m) override { got.emplace_back(net->now(), std::move(m)); }
  void restart() override { ++restarts; }
};

Message numbered(std::uint64_t seq) {
  Message m;
  m.kind = MessageKind::get;
  m.seq = seq;
  return m;
}

HistoryOp op(OpType kind, VirtualTime call, VirtualTime ret, std::string in = {}, std::string out = {},
             AckStatus st = AckStatus::ok) {
  HistoryOp h;
  h.kind = kind;
  h.key = "k";
  h.input = std::move(in);
  h.output = std::move(out);
  h.call = call;
  h.ret = ret;
  h.status = st;
  return h;
}

// Direct transcription of the three storage formulas.
struct Ratios {
  double rep, hyb, enc;
};
Ratios ratios(double K, double V, double M, double R, double C, double I, double O, double n, double k) {
  const double obj = K + V + M;
  return {(n - k + 1) * (K + V + M + R) / obj, ((n - k + 1) * (K + M + R) + n * V / k) / obj,
          (n * obj / k + R / O + n * (I + R / O) / (k * C / obj)) / obj};
}

}  // namespace

TEST_CASE("sim: zero delay delivers in send order") {
  SimNetwork net({1, DelayModel::fixed(0), {}, {}});
  Recorder a, b;
  a.net = b.net = &net;
  net.attach(1, &a);
  net.attach(2, &b);
  for (std::uint64_t i = 0; i < 20; ++i) net.send(i % 2 ? 1 : 2, i % 2 ? 2 : 1, numbered(i));
  net.run_until_quiescent();
  std::vector<std::uint64_t> order;
  for (auto* r : {&a, &b}) {
    for (auto& [t, m] : r->got) order.push_back(m.seq);
  }
  CHECK(a.got.size() == 10);
  for (std::size_t i = 1; i < a.got.size(); ++i) CHECK(a.got[i].second.seq > a.got[i - 1].second.seq);
}

TEST_CASE("sim: per-link FIFO clamp") {
  SimNetwork net({1, DelayModel::fixed(100), {}, {}});
  Recorder r;
  r.net = &net;
  net.attach(1, &r);
  net.attach(2, &r);
  net.set_link_delay(1, 2, DelayModel::fixed(5000));
  net.send(1, 2, numbered(1));
  net.set_link_delay(1, 2, DelayModel::fixed(1000));
  net.send(1, 2, numbered(2));
  net.run_until_quiescent();
  REQUIRE(r.got.size() == 2);
  CHECK(r.got[0].second.seq == 1);
  CHECK(r.got[0].first == 5000);
  CHECK(r.got[1].first >= r.got[0].first);
}

TEST_CASE("sim: failures drop traffic both ways and restore restarts") {
  SimNetwork net({1, DelayModel::fixed(100), {}, {}});
  Recorder a, b;
  a.net = b.net = &net;
  net.attach(1, &a);
  net.attach(2, &b);
  net.send(1, 2, numbered(1));  // in flight when 2 fails
  net.fail(2);
  net.send(1, 2, numbered(2));
  net.run_until_quiescent();
  CHECK(b.got.empty());
  net.restore(2);
  CHECK(b.restarts == 1);
  net.send(1, 2, numbered(3));
  net.run_until_quiescent();
  REQUIRE(b.got.size() == 1);
  CHECK(b.got[0].second.seq == 3);
}

TEST_CASE("sim: partitions and congestion") {
  SimNetwork net({1, DelayModel::fixed(100), {}, {}});
  Recorder a;
  a.net = &net;
  net.attach(1, &a);
  net.attach(2, &a);
  net.add_partition({1, 2, 0, 1000});
  CHECK(!net.send(2, 1, numbered(1)));
  net.add_congestion({2, 0, ~VirtualTime{0}, DelayModel::fixed(900)});
  net.run_until(1000);
  CHECK(net.send(2, 1, numbered(2)));
  net.run_until_quiescent();
  REQUIRE(a.got.size() == 1);
  CHECK(a.got[0].first == 2000);
}

TEST_CASE("sim: livelock horizon") {
  SimNetwork net;
  CHECK_THROWS_AS(net.run_while([] { return true; }, kSeconds), LivelockError);
}

TEST_CASE("sim: same seed, same trace") {
  auto run = [](std::uint64_t seed) {
    SimNetwork net({seed, DelayModel::normal(1000, 400), {}, {}});
    Recorder r;
    r.net = &net;
    for (NodeId n = 1; n <= 4; ++n) net.attach(n, &r);
    std::mt19937_64 rng(99);
    for (int i = 0; i < 500; ++i) {
      const NodeId from = 1 + rng() % 4, to = 1 + rng() % 4;
      net.send(from, to, numbered(i));
    }
    net.run_until_quiescent();
    return net.trace_hash();
  };
  CHECK(run(5) == run(5));
  CHECK(run(5) != run(6));
}

TEST_CASE("scenario scripts") {
  const auto s = parse_scenario(
      "# comment\n"
      "at 100 fail 3\n"
      "at 250 congest 4 normal 5 1 for 300\n"
      "at 400 partition 1 2\n"
      "at 900 restore 3\n");
  REQUIRE(s.size() == 4);
  CHECK(s[0].at == 100 * kMillis);
  CHECK(s[0].action == ScenarioDirective::Action::fail);
  CHECK(s[0].node == 3);
  CHECK(s[1].action == ScenarioDirective::Action::congest);
  CHECK(s[1].extra.mean_us == 5000);
  CHECK(s[1].duration == 300 * kMillis);
  CHECK(s[2].peer == 2);
  CHECK(s[3].action == ScenarioDirective::Action::restore);
  CHECK_THROWS_AS(parse_scenario("at x fail 1\n"), ScenarioError);
  CHECK_THROWS_AS(parse_scenario("at 5 explode 1\n"), ScenarioError);
}

TEST_CASE("redundancy: formulas and examples") {
  RedundancyParams p;
  p.V = 2;
  auto r = redundancy_report(p);
  CHECK(r.all_replication == doctest::Approx(3.0 * 22 / 14));
  CHECK(r.all_replication == doctest::Approx(4.714).epsilon(1e-3));
  p.V = 10;
  r = redundancy_report(p);
  CHECK(r.hybrid_encoding == doctest::Approx(72.5 / 22));

  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    RedundancyParams q;
    q.K = 1 + rng() % 64;
    q.V = 1 + rng() % 2000;
    q.O = 0.5 + (rng() % 50) / 100.0;
    q.k = 2 + rng() % 10;
    q.n = q.k + 1 + rng() % 4;
    const auto got = redundancy_report(q);
    const auto want = ratios(q.K, q.V, q.M, q.R, q.C, q.I, q.O, q.n, q.k);
    CHECK(got.all_replication == doctest::Approx(want.rep));
    CHECK(got.hybrid_encoding == doctest::Approx(want.hyb));
    CHECK(got.all_encoding == doctest::Approx(want.enc));
  }
  p.O = 0;
  CHECK_THROWS(redundancy_report(p));
}

TEST_CASE("redundancy: all-encoding decreases in V toward its limit") {
  RedundancyParams p;
  double prev = 1e9;
  for (const auto& pt : redundancy_sweep(p, 1, 5000)) {
    CHECK(pt.report.all_encoding < prev);
    prev = pt.report.all_encoding;
  }
  const double limit = all_encoding_limit(p);
  CHECK(limit == doctest::Approx(1.25 + 1.25 * (8 + 8 / 0.9) / 4096));
  CHECK(prev > limit);
  p.V = 1e7;
  CHECK(redundancy_report(p).all_encoding == doctest::Approx(limit).epsilon(1e-4));
}

TEST_CASE("redundancy: all-encoding < hybrid < all-replication") {
  // Objects that fit in one chunk.
  for (double K : {8.0, 16.0, 32.0, 64.0}) {
    for (auto [n, k] : {std::pair{10, 8}, std::pair{14, 10}}) {
      RedundancyParams p;
      p.K = K;
      p.n = n;
      p.k = k;
      for (const auto& pt : redundancy_sweep(p, 1, static_cast<int>(p.C - p.K - p.M))) {
        REQUIRE(pt.report.all_encoding < pt.report.hybrid_encoding);
        REQUIRE(pt.report.hybrid_encoding < pt.report.all_replication);
      }
    }
  }
  // With a single parity the per-chunk overhead term catches up with hybrid
  // encoding for large values.
  RedundancyParams p;
  p.n = 3;
  p.k = 2;
  CHECK(first_value_size_at_or_below(p, DataModel::hybrid_encoding, 0, 1, 10) == std::nullopt);
  int cross = 0;
  for (const auto& pt : redundancy_sweep(p, 1, 4000)) {
    if (pt.report.all_encoding >= pt.report.hybrid_encoding) {
      cross = static_cast<int>(pt.V);
      break;
    }
  }
  CHECK(cross == 2108);
}

TEST_CASE("zipf: rank-frequency slope and head mass") {
  const std::uint64_t n = 10000;
  const double theta = 0.99;
  ZipfGenerator z(n, theta);
  std::mt19937_64 rng(1);
  std::vector<double> count(n);
  for (int i = 0; i < 1000000; ++i) ++count[z.next(rng)];
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int pts = 0;
  for (int r = 1; r <= 1000; ++r) {
    const double x = std::log(r), y = std::log(count[r - 1]);
    sx += x, sy += y, sxx += x * x, sxy += x * y, ++pts;
  }
  const double slope = (pts * sxy - sx * sy) / (pts * sxx - sx * sx);
  CHECK(std::abs(slope + theta) <= 0.05 * theta);

  double h = 0;
  for (std::uint64_t r = 1; r <= n; ++r) h += 1 / std::pow(static_cast<double>(r), theta);
  CHECK(count[0] / 1e6 == doctest::Approx(1 / h).epsilon(0.05));
  CHECK(z.probability(0) == doctest::Approx(1 / h).epsilon(1e-9));
}

TEST_CASE("workloads: mixes, determinism and unique values") {
  for (const char* w : {"load", "A", "B", "C", "D", "F"}) {
    const auto m = mix_for(w);
    CHECK(m.get + m.update + m.set + m.rmw == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(mix_for("Z"), WorkloadError);

  WorkloadSpec spec;
  spec.name = "D";
  spec.records = 100;
  WorkloadGenerator a(spec), b(spec);
  std::set<std::string> values;
  for (int i = 0; i < 2000; ++i) {
    const auto x = a.next(), y = b.next();
    CHECK(x.key == y.key);
    CHECK(x.value == y.value);
    CHECK(x.key.size() == 24);
    if (!x.value.empty()) CHECK(values.insert(x.value).second);
  }
  CHECK(a.inserted() > 100);

  spec.name = "C";
  WorkloadGenerator c(spec);
  for (int i = 0; i < 1000; ++i) CHECK(c.next().type == OpType::get);

  spec.name = "load";
  WorkloadGenerator l(spec);
  CHECK(l.load_op(0).type == OpType::set);
  CHECK(l.load_op(0).value.size() == 8);
  CHECK(l.load_op(1).value.size() == 32);
}

TEST_CASE("linearizability checker") {
  SUBCASE("sequential history") {
    std::vector<HistoryOp> h{op(OpType::set, 0, 1, "a"), op(OpType::get, 2, 3, {}, "a"),
                             op(OpType::update, 4, 5, "b"), op(OpType::get, 6, 7, {}, "b"),
                             op(OpType::del, 8, 9), op(OpType::get, 10, 11, {}, {}, AckStatus::not_found)};
    CHECK(check_key_history(h, std::nullopt));
  }
  SUBCASE("stale read after a completed update") {
    std::vector<HistoryOp> h{op(OpType::update, 0, 1, "b"), op(OpType::get, 2, 3, {}, "a")};
    CHECK(!check_key_history(h, std::string("a")));
  }
  SUBCASE("concurrent read may see either value") {
    std::vector<HistoryOp> h{op(OpType::update, 0, 10, "b"), op(OpType::get, 2, 3, {}, "a"),
                             op(OpType::get, 4, 5, {}, "b")};
    CHECK(check_key_history(h, std::string("a")));
  }
  SUBCASE("reads cannot go back in time") {
    std::vector<HistoryOp> h{op(OpType::update, 0, 10, "b"), op(OpType::get, 2, 3, {}, "b"),
                             op(OpType::get, 4, 5, {}, "a")};
    CHECK(!check_key_history(h, std::string("a")));
  }
  SUBCASE("unknown outcome may or may not apply") {
    auto lost = op(OpType::update, 0, 1, "b", {}, AckStatus::failed);
    lost.unknown = true;
    CHECK(check_key_history({lost, op(OpType::get, 2, 3, {}, "a")}, std::string("a")));
    CHECK(check_key_history({lost, op(OpType::get, 2, 3, {}, "b")}, std::string("a")));
  }
  SUBCASE("per-key split") {
    auto a = op(OpType::set, 0, 1, "x");
    auto b = op(OpType::get, 2, 3, {}, "y");
    b.key = "other";
    const auto r = check_history({a, b});
    CHECK(!r.ok);
    CHECK(r.keys == 2);
    CHECK(r.violating_keys == std::vector<std::string>{"other"});
  }
}
