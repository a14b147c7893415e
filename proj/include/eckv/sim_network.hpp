#pragma once

#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "eckv/transport.hpp"

namespace eckv {

struct DelayModel {
  enum class Kind { fixed, normal };
  Kind kind = Kind::fixed;
  double mean_us = 0;
  double sd_us = 0;

  static DelayModel fixed(VirtualTime d) { return {Kind::fixed, static_cast<double>(d), 0}; }
  static DelayModel normal(double mean_us, double sd_us) { return {Kind::normal, mean_us, sd_us}; }
};

/// Extra delay on every outgoing link of `node` during [start, end).
struct Congestion {
  NodeId node = 0;
  VirtualTime start = 0;
  VirtualTime end = ~VirtualTime{0};
  DelayModel extra;
};

/// Sends between a and b (either direction) fail during [start, end).
struct Partition {
  NodeId a = 0;
  NodeId b = 0;
  VirtualTime start = 0;
  VirtualTime end = ~VirtualTime{0};
};

struct SimNetConfig {
  std::uint64_t seed = 1;
  DelayModel link_delay = DelayModel::fixed(100);
  std::vector<Congestion> congestion;
  std::vector<Partition> partitions;
};

// Owner ID for harness timers; never a real node and never failed.
inline constexpr NodeId kHarnessNode = 0xFFFFFFFF;

class LivelockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic discrete-event network. Messages are encoded at send and
/// decoded at delivery so every hop exercises the wire codec. Each link has
/// its own delay stream, seeded from (seed, from, to), and deliveries on a
/// link never overtake earlier ones.
class SimNetwork : public Transport {
 public:
  explicit SimNetwork(SimNetConfig config = {});

  void attach(NodeId id, MessageHandler* handler);

  bool send(NodeId from, NodeId to, Message msg) override;
  VirtualTime now() const override { return now_; }
  void schedule(NodeId owner, VirtualTime delay, std::function<void()> fn,
                bool background = false) override;

  /// Crash-stop: in-flight messages to and from the node are lost and its
  /// timers stop firing. State in memory is kept for restore().
  void fail(NodeId id);
  void restore(NodeId id);
  bool failed(NodeId id) const { return failed_.count(id) > 0; }

  void set_link_delay(NodeId from, NodeId to, DelayModel model);
  void add_congestion(Congestion c) { config_.congestion.push_back(c); }
  void add_partition(Partition p) { config_.partitions.push_back(p); }

  /// Runs one event. False if the queue is empty.
  bool step();
  /// Processes every event with time <= t, then sets the clock to t.
  void run_until(VirtualTime t);
  /// Runs until no foreground event remains; returns the virtual time
  /// elapsed. Throws LivelockError if the horizon passes first.
  VirtualTime run_until_quiescent(VirtualTime horizon = 600 * kSeconds);
  /// Runs while `pred()` holds; throws LivelockError past the horizon.
  template <typename Pred>
  void run_while(Pred pred, VirtualTime horizon) {
    const VirtualTime limit = now_ + horizon;
    while (pred()) {
      if (queue_.empty() || queue_.top().time > limit) {
        throw LivelockError("condition still pending at t=" + std::to_string(now_) +
                            "us\n" + pending_dump());
      }
      step();
    }
  }

  std::size_t foreground_pending() const { return foreground_pending_; }
  std::uint64_t trace_hash() const { return trace_hash_; }
  std::uint64_t delivered_count() const { return delivered_; }
  std::uint64_t dropped_count() const { return dropped_; }
  std::string pending_dump(std::size_t limit = 20) const;

  /// Delivery observer for trace assertions in tests.
  std::function<void(VirtualTime, NodeId, NodeId, const Message&)> on_deliver;

 private:
  struct Event {
    VirtualTime time = 0;
    std::uint64_t seq = 0;
    bool is_timer = false;
    bool background = false;
    NodeId from = 0;
    NodeId to = 0;
    std::uint64_t from_generation = 0;
    std::uint64_t to_generation = 0;
    std::vector<std::uint8_t> frame;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };
  struct Link {
    std::mt19937_64 rng;
    VirtualTime last_delivery = 0;
    std::optional<DelayModel> override_model;
  };

  Link& link(NodeId from, NodeId to);
  VirtualTime sample(std::mt19937_64& rng, const DelayModel& m);
  bool partitioned(NodeId a, NodeId b) const;
  std::uint64_t generation(NodeId id) const;
  void push(Event ev);
  void mix(std::uint64_t v);

  SimNetConfig config_;
  VirtualTime now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::unordered_map<NodeId, MessageHandler*> nodes_;
  std::map<std::pair<NodeId, NodeId>, Link> links_;
  std::set<NodeId> failed_;
  std::unordered_map<NodeId, std::uint64_t> generations_;
  std::size_t foreground_pending_ = 0;
  std::uint64_t trace_hash_ = 0xcbf29ce484222325ull;
  std::uint64_t delivered_ = 0;
  std::uint64_t dropped_ = 0;
};

/// One timed directive of a failure scenario script.
struct ScenarioDirective {
  enum class Action { fail, restore, congest, partition };
  VirtualTime at = 0;
  Action action = Action::fail;
  NodeId node = 0;
  NodeId peer = 0;  // partition only
  DelayModel extra;  // congest only
  VirtualTime duration = ~VirtualTime{0};  // congest/partition; "for <ms>"
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lines: `at <ms> fail <s>`, `at <ms> restore <s>`,
/// `at <ms> congest <s> normal <mean_ms> <sd_ms> [for <ms>]`,
/// `at <ms> partition <a> <b> [for <ms>]`. '#' starts a comment.
std::vector<ScenarioDirective> parse_scenario(std::string_view text);

/// Schedules the directives relative to the network's current time.
/// Congestion and partitions go straight into the network; fail/restore
/// call the hooks so a harness can observe them.
void apply_scenario(SimNetwork& net, const std::vector<ScenarioDirective>& script,
                    std::function<void(NodeId)> on_fail, std::function<void(NodeId)> on_restore);

}  // namespace eckv
