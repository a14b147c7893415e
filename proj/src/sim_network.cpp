#include "eckv/sim_network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eckv/hash.hpp"

namespace eckv {

SimNetwork::SimNetwork(SimNetConfig config) : config_(std::move(config)) {}

void SimNetwork::attach(NodeId id, MessageHandler* handler) { nodes_[id] = handler; }

SimNetwork::Link& SimNetwork::link(NodeId from, NodeId to) {
  auto [it, fresh] = links_.try_emplace({from, to});
  if (fresh) {
    const std::uint64_t s = hash64((std::uint64_t{from} << 32) | to, config_.seed);
    it->second.rng.seed(s);
  }
  return it->second;
}

VirtualTime SimNetwork::sample(std::mt19937_64& rng, const DelayModel& m) {
  if (m.kind == DelayModel::Kind::fixed) return static_cast<VirtualTime>(std::llround(m.mean_us));
  std::normal_distribution<double> d(m.mean_us, m.sd_us);
  return static_cast<VirtualTime>(std::llround(std::max(0.0, d(rng))));
}

bool SimNetwork::partitioned(NodeId a, NodeId b) const {
  for (const auto& p : config_.partitions) {
    if (((p.a == a && p.b == b) || (p.a == b && p.b == a)) && now_ >= p.start && now_ < p.end) {
      return true;
    }
  }
  return false;
}

std::uint64_t SimNetwork::generation(NodeId id) const {
  auto it = generations_.find(id);
  return it == generations_.end() ? 0 : it->second;
}

void SimNetwork::push(Event ev) {
  ev.seq = next_seq_++;
  if (!ev.background) ++foreground_pending_;
  queue_.push(std::move(ev));
}

void SimNetwork::mix(std::uint64_t v) {
  trace_hash_ ^= v;
  trace_hash_ *= 0x100000001b3ull;
  trace_hash_ ^= trace_hash_ >> 29;
}

bool SimNetwork::send(NodeId from, NodeId to, Message msg) {
  if (!nodes_.count(to) || failed(from) || partitioned(from, to)) return false;
  Event ev;
  ev.from = from;
  ev.to = to;
  ev.from_generation = generation(from);
  ev.to_generation = generation(to);
  ev.frame = encode_message(msg);
  VirtualTime delay = 0;
  Link& l = link(from, to);
  if (from != to) {
    delay = sample(l.rng, l.override_model ? *l.override_model : config_.link_delay);
    for (const auto& c : config_.congestion) {
      if (c.node == from && now_ >= c.start && now_ < c.end) delay += sample(l.rng, c.extra);
    }
  }
  ev.time = std::max(now_ + delay, l.last_delivery);
  l.last_delivery = ev.time;
  push(std::move(ev));
  return true;
}

void SimNetwork::schedule(NodeId owner, VirtualTime delay, std::function<void()> fn,
                          bool background) {
  Event ev;
  ev.is_timer = true;
  ev.background = background;
  ev.from = owner;
  ev.from_generation = generation(owner);
  ev.time = now_ + delay;
  ev.fn = std::move(fn);
  push(std::move(ev));
}

void SimNetwork::fail(NodeId id) {
  if (failed_.insert(id).second) ++generations_[id];
}

void SimNetwork::restore(NodeId id) {
  if (!failed_.erase(id)) return;
  ++generations_[id];
  if (auto it = nodes_.find(id); it != nodes_.end()) it->second->restart();
}

void SimNetwork::set_link_delay(NodeId from, NodeId to, DelayModel model) {
  link(from, to).override_model = model;
}

bool SimNetwork::step() {
  if (queue_.empty()) return false;
  Event ev = std::move(const_cast<Event&>(queue_.top()));
  queue_.pop();
  if (!ev.background) --foreground_pending_;
  now_ = std::max(now_, ev.time);

  if (ev.is_timer) {
    if (failed(ev.from) || generation(ev.from) != ev.from_generation) return true;
    mix(ev.time);
    mix(0x7117 + ev.from);
    ev.fn();
    return true;
  }
  if (failed(ev.to) || generation(ev.to) != ev.to_generation ||
      generation(ev.from) != ev.from_generation) {
    ++dropped_;
    return true;
  }
  Message msg = decode_message(ev.frame);
  mix(ev.time);
  mix((std::uint64_t{ev.from} << 32) | ev.to);
  mix(hash64(std::span<const std::uint8_t>(ev.frame), 0));
  ++delivered_;
  if (on_deliver) on_deliver(now_, ev.from, ev.to, msg);
  nodes_.at(ev.to)->on_message(ev.from, std::move(msg));
  return true;
}

void SimNetwork::run_until(VirtualTime t) {
  while (!queue_.empty() && queue_.top().time <= t) step();
  now_ = std::max(now_, t);
}

VirtualTime SimNetwork::run_until_quiescent(VirtualTime horizon) {
  const VirtualTime start = now_;
  while (foreground_pending_ > 0) {
    if (queue_.top().time > start + horizon) {
      throw LivelockError("not quiescent after " + std::to_string(horizon) + "us\n" +
                          pending_dump());
    }
    step();
  }
  return now_ - start;
}

std::string SimNetwork::pending_dump(std::size_t limit) const {
  auto copy = queue_;
  std::ostringstream os;
  os << copy.size() << " pending events (" << foreground_pending_ << " foreground)\n";
  for (std::size_t i = 0; i < limit && !copy.empty(); ++i, copy.pop()) {
    const Event& ev = copy.top();
    os << "  t=" << ev.time << "us ";
    if (ev.is_timer) {
      os << "timer owner=" << ev.from << (ev.background ? " (background)" : "");
    } else {
      Message m = decode_message(ev.frame);
      os << kind_name(m.kind) << (m.reply ? " reply" : "") << ' ' << ev.from << "->" << ev.to
         << " seq=" << m.seq;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace eckv
