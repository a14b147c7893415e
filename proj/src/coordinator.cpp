#include "eckv/coordinator.hpp"

#include <algorithm>

namespace eckv {

Coordinator::Coordinator(const ClusterConfig& config, Transport& net, CheckpointStore& checkpoints,
                         std::ostream* state_log)
    : config_(config), net_(net), checkpoints_(checkpoints), log_(state_log) {
  for (NodeId p : config_.proxy_ids()) live_proxies_.insert(p);
}

void Coordinator::start() {
  for (ServerId s : config_.servers) last_heartbeat_[s] = net_.now();
  net_.schedule(kCoordinatorId, detect_period(), [this] { detect_tick(); }, true);
}

const KeyChunkMapping* Coordinator::rebuilt_mappings(ServerId s) const {
  auto it = rebuilt_.find(s);
  return it == rebuilt_.end() ? nullptr : &it->second;
}

void Coordinator::set_state(ServerId s, ServerState st) {
  if (st == ServerState::normal) view_.states.erase(s);
  else view_.states[s] = st;
  history_.push_back(StateTransition{view_.epoch, s, st, net_.now()});
  if (log_) *log_ << view_.epoch << ' ' << s << ' ' << state_name(st) << ' ' << net_.now() << '\n';
}

void Coordinator::broadcast(MessageKind kind) {
  Message m;
  m.kind = kind;
  m.origin = kCoordinatorId;
  view_.fill(m);
  for (NodeId p : live_proxies_) net_.send(kCoordinatorId, p, m);
  for (ServerId s : config_.servers) {
    const ServerState st = view_.state(s);
    if (st == ServerState::intermediate || st == ServerState::degraded) continue;
    net_.send(kCoordinatorId, s, m);
  }
}

void Coordinator::detect_tick() {
  const VirtualTime now = net_.now();
  const VirtualTime limit = config_.heartbeat_interval * config_.heartbeat_misses;
  std::set<ServerId> failed;
  for (auto& [s, last] : last_heartbeat_) {
    if (view_.state(s) == ServerState::normal && now - last > limit && !round_servers_.count(s)) {
      failed.insert(s);
    }
  }
  if (!failed.empty()) declare_failed(failed);
  net_.schedule(kCoordinatorId, detect_period(), [this] { detect_tick(); }, true);
}

void Coordinator::declare_failed(const std::set<ServerId>& servers) {
  std::set<ServerId> fresh;
  for (ServerId s : servers) {
    if (view_.state(s) == ServerState::normal && !round_servers_.count(s)) fresh.insert(s);
  }
  if (fresh.empty()) return;
  if (round_active_) {
    queued_failures_.insert(fresh.begin(), fresh.end());
    return;
  }
  start_round(std::move(fresh));
}

void Coordinator::start_round(std::set<ServerId> failed) {
  round_active_ = true;
  round_servers_ = std::move(failed);
  round_start_ = net_.now();
  collected_.clear();
  ++view_.epoch;
  for (ServerId s : round_servers_) set_state(s, ServerState::intermediate);
  broadcast(MessageKind::state_announce);
  acks_pending_ = live_proxies_;
  if (acks_pending_.empty()) {
    phase2();
    return;
  }
  const std::uint64_t epoch = view_.epoch;
  net_.schedule(kCoordinatorId, 10 * config_.request_timeout, [this, epoch] {
    if (!round_active_ || view_.epoch != epoch || acks_pending_.empty()) return;
    // Silent proxies are dropped from membership so the round can finish.
    for (NodeId p : acks_pending_) {
      live_proxies_.erase(p);
      ++stats_.expelled_proxies;
    }
    acks_pending_.clear();
    phase2();
  });
}

void Coordinator::phase2() {
  for (ServerId s : round_servers_) {
    KeyChunkMapping map;
    if (auto cp = checkpoints_.load(s)) map = std::move(*cp);
    else ++stats_.missing_checkpoints;
    rebuilt_[s] = std::move(map);
  }
  for (const auto& km : collected_) {
    const auto p = map_key(km.key, config_.lists);
    const ServerId d = config_.list(p.stripe_list).data_servers[p.position];
    auto it = rebuilt_.find(d);
    if (it == rebuilt_.end() || !round_servers_.count(d)) continue;
    auto slot = it->second.find(km.key);
    if (slot == it->second.end()) {
      it->second.emplace(km.key, km.chunk);
    } else if (!km.chunk.unsealed() || slot->second.unsealed()) {
      // A proxy's pre-seal ID never overrides a sealed one from the checkpoint.
      slot->second = km.chunk;
    }
  }
  collected_.clear();
  for (ServerId s : round_servers_) assign_redirects(s);
  ++view_.epoch;
  for (ServerId s : round_servers_) set_state(s, ServerState::degraded);
  broadcast(MessageKind::state_commit);
  timings_.push_back(TransitionTiming{{round_servers_.begin(), round_servers_.end()}, true,
                                      round_start_, net_.now()});
  round_active_ = false;
  round_servers_.clear();
  release_held();
  if (!queued_failures_.empty()) {
    auto next = std::move(queued_failures_);
    queued_failures_.clear();
    declare_failed(next);
  }
}

void Coordinator::assign_redirects(ServerId failed) {
  for (const StripeList& list : config_.lists) {
    if (!list.contains(failed)) continue;
    std::vector<ServerId> live;
    int down = 0;
    for (ServerId m : list.members()) {
      if (view_.state(m) == ServerState::normal && !round_servers_.count(m)) live.push_back(m);
      else ++down;
    }
    if (down > config_.code.n - config_.code.k || live.empty()) {
      ++stats_.unrecoverable;
      continue;
    }
    const ServerId pick = *std::min_element(live.begin(), live.end(), [&](ServerId a, ServerId b) {
      const auto la = redirect_load_[a];
      const auto lb = redirect_load_[b];
      return la != lb ? la < lb : a < b;
    });
    view_.redirects[{failed, list.id}] = pick;
    ++redirect_load_[pick];
  }
}

bool Coordinator::list_busy(const StripeList& list) const {
  for (ServerId m : list.members()) {
    const ServerState st = view_.state(m);
    if (st == ServerState::intermediate || st == ServerState::coordinated_normal) return true;
  }
  return false;
}

void Coordinator::route(NodeId from, const Message& m) {
  ++stats_.route_requests;
  const auto p = map_key(m.key, config_.lists);
  const StripeList& list = config_.list(p.stripe_list);
  const ServerId d = list.data_servers[p.position];
  const auto kind = static_cast<MessageKind>(m.request_kind);

  if (list_busy(list) || round_active_) {
    ++stats_.held_routes;
    held_.emplace_back(from, m);
    return;
  }
  Message r;
  r.kind = MessageKind::degraded_route_resp;
  r.seq = m.seq;
  r.key = m.key;

  if (auto it = degraded_sets_.find(m.key); it != degraded_sets_.end()) {
    r.target = it->second.target;
    r.servers = {it->second.cause};
  } else if (kind == MessageKind::set && view_.state(d) != ServerState::normal) {
    if (auto target = view_.redirect(d, list.id)) {
      degraded_sets_[m.key] = DegradedSet{*target, d};
      r.target = *target;
      r.servers = {d};
    } else {
      r.status = AckStatus::failed;
    }
  } else if (view_.state(d) == ServerState::normal) {
    r.target = d;
  } else if (auto target = view_.redirect(d, list.id)) {
    r.target = *target;
    const auto& map = rebuilt_[d];
    if (auto it = map.find(m.key); it != map.end()) r.chunk_id = it->second;
    else r.status = AckStatus::not_found;
  } else {
    r.status = AckStatus::failed;
  }
  net_.send(kCoordinatorId, from, std::move(r));
}

void Coordinator::release_held() {
  auto held = std::move(held_);
  held_.clear();
  for (auto& [from, m] : held) {
    const auto p = map_key(m.key, config_.lists);
    if (list_busy(config_.list(p.stripe_list)) || round_active_) {
      held_.emplace_back(from, std::move(m));
      continue;
    }
    // The proxy re-evaluates against its now current view.
    Message r;
    r.kind = MessageKind::degraded_route_resp;
    r.seq = m.seq;
    r.key = m.key;
    r.status = AckStatus::redirect;
    net_.send(kCoordinatorId, from, std::move(r));
  }
}

void Coordinator::begin_restore(ServerId s) {
  ++view_.epoch;
  set_state(s, ServerState::coordinated_normal);
  restore_start_[s] = net_.now();
  broadcast(MessageKind::state_commit);
  std::set<ServerId> standins;
  for (const auto& [key, r] : view_.redirects) {
    if (key.first == s) standins.insert(r);
  }
  if (standins.empty()) {
    finish_restore(s);
    return;
  }
  migrations_[s] = standins;
  for (ServerId r : standins) {
    Message m;
    m.kind = MessageKind::migrate_object;
    m.origin = kCoordinatorId;
    m.target = s;
    net_.send(kCoordinatorId, r, std::move(m));
  }
}

void Coordinator::finish_restore(ServerId s) {
  migrations_.erase(s);
  for (auto it = view_.redirects.begin(); it != view_.redirects.end();) {
    if (it->first.first == s) {
      if (redirect_load_[it->second] > 0) --redirect_load_[it->second];
      it = view_.redirects.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = degraded_sets_.begin(); it != degraded_sets_.end();) {
    if (it->second.cause == s) it = degraded_sets_.erase(it);
    else ++it;
  }
  rebuilt_.erase(s);
  ++view_.epoch;
  set_state(s, ServerState::normal);
  broadcast(MessageKind::state_commit);
  timings_.push_back(TransitionTiming{{s}, false, restore_start_[s], net_.now()});
  restore_start_.erase(s);
  release_held();
}

void Coordinator::on_message(NodeId from, Message m) {
  switch (m.kind) {
    case MessageKind::heartbeat: {
      const ServerId s = m.origin;
      if (!last_heartbeat_.count(s)) return;
      last_heartbeat_[s] = net_.now();
      if (auto& inc = incarnations_[s]; inc != m.epoch) {
        // Restarted before the detector noticed: whatever it had in flight is
        // gone, so run the failure round anyway.
        inc = m.epoch;
        if (view_.state(s) == ServerState::normal) {
          declare_failed({s});
          return;
        }
      }
      if (view_.state(s) == ServerState::degraded && !round_active_) begin_restore(s);
      return;
    }
    case MessageKind::state_ack:
      if (!round_active_ || m.epoch != view_.epoch || !acks_pending_.erase(from)) return;
      collected_.insert(collected_.end(), m.mappings.begin(), m.mappings.end());
      if (acks_pending_.empty()) phase2();
      return;
    case MessageKind::degraded_route_req:
      route(from, m);
      return;
    case MessageKind::migrate_done: {
      auto it = migrations_.find(m.target);
      if (it == migrations_.end()) return;
      it->second.erase(from);
      if (it->second.empty()) finish_restore(m.target);
      return;
    }
    default:
      return;
  }
}

}  // namespace eckv
