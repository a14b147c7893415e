#include "eckv/proxy_node.hpp"

#include <algorithm>

namespace eckv {
namespace {

bool mutation(MessageKind k) { return k != MessageKind::get; }

}  // namespace

ProxyNode::ProxyNode(NodeId id, const ClusterConfig& config, Transport& net)
    : id_(id), config_(config), net_(net) {}

void ProxyNode::set(const std::string& key, const std::string& value, ClientCallback cb) {
  submit(MessageKind::set, key, value, std::move(cb));
}
void ProxyNode::get(const std::string& key, ClientCallback cb) {
  submit(MessageKind::get, key, {}, std::move(cb));
}
void ProxyNode::update(const std::string& key, const std::string& value, ClientCallback cb) {
  submit(MessageKind::update, key, value, std::move(cb));
}
void ProxyNode::del(const std::string& key, ClientCallback cb) {
  submit(MessageKind::del, key, {}, std::move(cb));
}

std::size_t ProxyNode::mapping_backup_size() const {
  std::size_t n = 0;
  for (const auto& [s, m] : mapping_backup_) n += m.size();
  return n;
}

std::uint64_t ProxyNode::watermark() const {
  return incomplete_.empty() ? next_request_id_ - 1 : *incomplete_.begin() - 1;
}

void ProxyNode::submit(MessageKind kind, const std::string& key, const std::string& value,
                       ClientCallback cb) {
  ++stats_.issued;
  if (key.empty() || key.size() > kMaxKeySize ||
      (kind != MessageKind::get && kind != MessageKind::del && value.size() > kMaxValueSize)) {
    ++stats_.failed;
    cb(ClientResult{AckStatus::failed, {}});
    return;
  }
  const std::uint64_t rid = next_rid_++;
  Request& r = requests_[rid];
  r.kind = kind;
  r.key = key;
  r.value = value;
  r.cb = std::move(cb);
  const auto p = map_key(key, config_.lists);
  r.list = p.stripe_list;
  r.data_server = config_.list(p.stripe_list).data_servers[p.position];
  auto& q = key_queues_[key];
  q.push_back(rid);
  if (q.size() == 1) dispatch(rid);
}

void ProxyNode::start_next(const std::string& key) {
  auto it = key_queues_.find(key);
  if (it == key_queues_.end()) return;
  it->second.pop_front();
  if (it->second.empty()) {
    key_queues_.erase(it);
    return;
  }
  dispatch(it->second.front());
}

std::vector<ServerId> ProxyNode::involved(const Request& r) const {
  if (r.kind == MessageKind::get) return {r.data_server};
  return config_.list(r.list).members();
}

bool ProxyNode::involves(const Request& r, const std::set<ServerId>& servers) const {
  for (ServerId s : involved(r)) {
    if (servers.count(s)) return true;
  }
  return false;
}

void ProxyNode::send_to(Request& r, std::uint64_t rid, NodeId to, Message m) {
  m.seq = next_msg_++;
  msg_map_[m.seq] = {rid, to};
  r.msgs.push_back(m.seq);
  r.awaiting.insert(to);
  if (net_.send(id_, to, std::move(m))) ++r.sends_ok;
}

void ProxyNode::cancel(Request& r) {
  for (auto seq : r.msgs) msg_map_.erase(seq);
  r.msgs.clear();
  r.awaiting.clear();
}

void ProxyNode::park(std::uint64_t rid) {
  Request& r = requests_.at(rid);
  cancel(r);
  if (!r.parked) {
    r.parked = true;
    ++stats_.parked;
    parked_.push_back(rid);
  }
}

void ProxyNode::dispatch(std::uint64_t rid) {
  Request& r = requests_.at(rid);
  cancel(r);
  r.parked = false;
  r.status = AckStatus::ok;
  r.result.clear();
  r.chunk.reset();
  r.stash_after_commit.clear();
  r.sends_ok = 0;
  ++r.attempt;

  bool all_normal = true;
  for (ServerId s : involved(r)) {
    const ServerState st = view_.state(s);
    if (st == ServerState::intermediate || (phase1_ && announced_.count(s))) {
      park(rid);
      return;
    }
    if (st != ServerState::normal) all_normal = false;
  }
  if (mutation(r.kind)) {
    incomplete_.erase(r.request_id);
    r.request_id = next_request_id_++;
    incomplete_.insert(r.request_id);
  }
  r.degraded = !all_normal;
  if (r.degraded) {
    ++stats_.degraded;
    ++stats_.route_requests;
    Message m;
    m.kind = MessageKind::degraded_route_req;
    m.origin = id_;
    m.key = r.key;
    m.request_kind = static_cast<std::uint8_t>(r.kind);
    send_to(r, rid, kCoordinatorId, std::move(m));
    return;
  }

  Message m;
  m.kind = r.kind;
  m.key = r.key;
  m.origin = id_;
  r.dest = r.data_server;
  if (r.kind == MessageKind::get) {
    send_to(r, rid, r.data_server, std::move(m));
    arm_get_timeout(rid);
    return;
  }
  m.request_id = r.request_id;
  m.watermark = watermark();
  if (r.kind == MessageKind::set) {
    m.record = ObjectRecord::make(r.key, r.value);
    const StripeList& list = config_.list(r.list);
    send_to(r, rid, r.data_server, m);
    m.flags = msg_flags::kParityRole;
    for (ServerId p : list.parity_servers) send_to(r, rid, p, m);
    arm_mutation_timeout(rid);
    return;
  }
  m.value = r.value;
  send_to(r, rid, r.data_server, std::move(m));
  arm_mutation_timeout(rid);
}

void ProxyNode::arm_get_timeout(std::uint64_t rid) {
  const std::uint64_t attempt = requests_.at(rid).attempt;
  net_.schedule(id_, config_.request_timeout, [this, rid, attempt] {
    auto it = requests_.find(rid);
    if (it == requests_.end() || it->second.attempt != attempt || it->second.parked ||
        it->second.awaiting.empty()) {
      return;
    }
    if (++it->second.get_retries > 3) {
      cancel(it->second);
      it->second.status = AckStatus::failed;
      complete(rid);
      return;
    }
    ++stats_.get_retries;
    dispatch(rid);
  });
}

// Normal-mode mutations to servers the view still calls healthy. Nothing
// reached a server: send again. Something did: the outcome is unknown and
// a blind resend could apply it twice, so report failure.
void ProxyNode::arm_mutation_timeout(std::uint64_t rid) {
  const std::uint64_t attempt = requests_.at(rid).attempt;
  net_.schedule(id_, 3 * config_.request_timeout, [this, rid, attempt] {
    auto it = requests_.find(rid);
    if (it == requests_.end() || it->second.attempt != attempt || it->second.parked ||
        it->second.awaiting.empty()) {
      return;
    }
    Request& r = it->second;
    const bool owned_by_round =
        phase1_ || r.degraded || std::any_of(r.awaiting.begin(), r.awaiting.end(), [&](NodeId s) {
          return announced_.count(s) > 0 || view_.state(s) != ServerState::normal;
        });
    if (owned_by_round) {
      arm_mutation_timeout(rid);
      return;
    }
    if (r.sends_ok == 0 && ++r.mutation_retries <= 3) {
      ++stats_.mutation_retries;
      dispatch(rid);
      return;
    }
    ++stats_.timed_out;
    cancel(r);
    r.status = AckStatus::failed;
    complete(rid);
  });
}

void ProxyNode::on_message(NodeId from, Message m) {
  switch (m.kind) {
    case MessageKind::state_announce:
      on_announce(m);
      return;
    case MessageKind::state_commit:
      on_commit(m);
      return;
    case MessageKind::checkpoint_ack:
      // The data server's mappings are now on secondary storage.
      mapping_backup_.erase(m.origin);
      return;
    default:
      on_reply(from, m);
  }
}

void ProxyNode::on_reply(NodeId, const Message& m) {
  auto mit = msg_map_.find(m.seq);
  if (mit == msg_map_.end()) {
    if (revert_msgs_.erase(m.seq)) try_finish_phase1();
    return;
  }
  const auto [rid, to] = mit->second;
  msg_map_.erase(mit);
  auto it = requests_.find(rid);
  if (it == requests_.end()) return;
  Request& r = it->second;
  if (m.kind == MessageKind::degraded_route_resp) {
    r.awaiting.erase(to);
    on_route(rid, m);
    return;
  }
  if (!r.awaiting.erase(to)) return;
  if (m.status == AckStatus::redirect) {
    // The stand-in is migrating; ask the coordinator again shortly.
    cancel(r);
    const std::uint64_t attempt = r.attempt;
    net_.schedule(id_, kMillis, [this, rid, attempt] {
      auto it = requests_.find(rid);
      if (it != requests_.end() && it->second.attempt == attempt) dispatch(rid);
    });
    return;
  }
  if (to == r.dest) {
    r.status = m.status;
    r.result = m.value;
    r.chunk = m.chunk_id;
  }
  if (r.awaiting.empty()) complete(rid);
  else if (phase1_) try_finish_phase1();
}

void ProxyNode::on_route(std::uint64_t rid, const Message& m) {
  Request& r = requests_.at(rid);
  if (m.status == AckStatus::redirect) {
    dispatch(rid);
    return;
  }
  if (m.status != AckStatus::ok) {
    r.status = m.status;
    complete(rid);
    return;
  }
  Message q;
  q.kind = r.kind;
  q.key = r.key;
  q.origin = id_;
  q.flags = msg_flags::kDegraded;
  q.chunk_id = m.chunk_id;
  if (!m.servers.empty()) q.target = m.servers.front();
  r.dest = m.target;
  if (r.kind == MessageKind::set) q.record = ObjectRecord::make(r.key, r.value);
  if (r.kind == MessageKind::update) q.value = r.value;
  if (mutation(r.kind)) {
    q.request_id = r.request_id;
    q.watermark = watermark();
  }
  send_to(r, rid, r.dest, std::move(q));
  if (r.kind == MessageKind::get) arm_get_timeout(rid);
}

void ProxyNode::complete(std::uint64_t rid) {
  auto it = requests_.find(rid);
  Request r = std::move(it->second);
  requests_.erase(it);
  cancel(r);
  if (mutation(r.kind)) incomplete_.erase(r.request_id);
  if (r.kind == MessageKind::set && r.status == AckStatus::ok && r.chunk && !r.degraded) {
    mapping_backup_[r.data_server][r.key] = *r.chunk;
  }
  if (r.kind == MessageKind::del && r.status == AckStatus::ok) {
    if (auto m = mapping_backup_.find(r.data_server); m != mapping_backup_.end()) m->second.erase(r.key);
  }
  for (ServerId p : r.stash_after_commit) {
    Message s;
    s.kind = MessageKind::set;
    s.flags = msg_flags::kParityRole;
    s.key = r.key;
    s.record = ObjectRecord::make(r.key, r.value);
    s.origin = id_;
    post_commit_stash_.emplace_back(p, std::move(s));
  }
  ++stats_.completed;
  if (r.status == AckStatus::failed) ++stats_.failed;
  r.cb(ClientResult{r.status, r.status == AckStatus::ok ? std::move(r.result) : std::string()});
  start_next(r.key);
  if (phase1_) try_finish_phase1();
}

// ------------------------------------------------------------- transitions

void ProxyNode::on_announce(const Message& m) {
  if (!view_.apply(m)) return;
  announced_.clear();
  for (const auto& [s, st] : view_.states) {
    if (st == ServerState::intermediate) announced_.insert(s);
  }
  if (announced_.empty()) return;
  phase1_ = true;
  deadline_passed_ = false;
  revert_deadline_passed_ = false;
  partial_ = false;
  announce_epoch_ = m.epoch;
  const std::uint64_t epoch = m.epoch;
  net_.schedule(id_, 2 * config_.request_timeout, [this, epoch] {
    if (phase1_ && announce_epoch_ == epoch) {
      deadline_passed_ = true;
      try_finish_phase1();
    }
  });

  std::vector<std::uint64_t> done;
  std::vector<std::uint64_t> requeue;
  for (auto& [rid, r] : requests_) {
    if (r.parked || r.awaiting.empty()) continue;
    if (r.kind == MessageKind::get) {
      if (std::any_of(r.awaiting.begin(), r.awaiting.end(),
                      [&](NodeId s) { return announced_.count(s) > 0; })) {
        requeue.push_back(rid);
      }
      continue;
    }
    if (r.kind == MessageKind::set && !r.degraded && !announced_.count(r.data_server)) {
      // Only parity copies are missing: the data server holds the object and
      // the stand-in receives the copy once the round commits.
      for (ServerId p : config_.list(r.list).parity_servers) {
        if (announced_.count(p) && r.awaiting.erase(p)) r.stash_after_commit.push_back(p);
      }
      if (r.awaiting.empty()) done.push_back(rid);
    }
  }
  for (auto rid : requeue) park(rid);
  for (auto rid : done) complete(rid);
  try_finish_phase1();
}

void ProxyNode::try_finish_phase1() {
  if (!phase1_) return;
  std::vector<std::uint64_t> stalled;
  for (auto& [rid, r] : requests_) {
    if (r.parked || r.awaiting.empty()) continue;
    const bool blocked = std::any_of(r.awaiting.begin(), r.awaiting.end(),
                                     [&](NodeId s) { return announced_.count(s) > 0; });
    if (!blocked) continue;
    if (!deadline_passed_) return;
    stalled.push_back(rid);
  }
  for (auto rid : stalled) {
    Request& r = requests_.at(rid);
    if ((r.kind == MessageKind::update || r.kind == MessageKind::del) && !r.degraded) {
      const StripeList& list = config_.list(r.list);
      for (ServerId p : list.parity_servers) {
        Message rv;
        rv.kind = MessageKind::delta_revert;
        rv.origin = id_;
        rv.request_id = r.request_id;
        ++stats_.reverts;
        if (announced_.count(p) || view_.state(p) != ServerState::normal) {
          post_commit_reverts_.push_back({p, list.id, r.request_id});
        } else {
          rv.seq = next_msg_++;
          revert_msgs_.insert(rv.seq);
          net_.send(id_, p, std::move(rv));
        }
      }
    }
    incomplete_.erase(r.request_id);
    ++stats_.replays;
    park(rid);
  }
  if (!revert_msgs_.empty()) {
    if (!stalled.empty()) {
      const std::uint64_t epoch = announce_epoch_;
      net_.schedule(id_, 2 * config_.request_timeout, [this, epoch] {
        if (phase1_ && announce_epoch_ == epoch) {
          revert_deadline_passed_ = true;
          try_finish_phase1();
        }
      });
    }
    if (!revert_deadline_passed_) return;
    // Reverts that never came back are reported rather than awaited forever.
    partial_ = true;
    revert_msgs_.clear();
  }

  Message ack;
  ack.kind = MessageKind::state_ack;
  ack.origin = id_;
  ack.epoch = announce_epoch_;
  if (partial_) ack.flags = msg_flags::kPartial;
  for (ServerId s : announced_) {
    if (auto it = mapping_backup_.find(s); it != mapping_backup_.end()) {
      for (const auto& [key, chunk] : it->second) ack.mappings.push_back(KeyMapping{key, chunk});
    }
  }
  phase1_ = false;
  net_.send(id_, kCoordinatorId, std::move(ack));
}

void ProxyNode::on_commit(const Message& m) {
  if (!view_.apply(m)) return;
  if (phase1_) {
    // Committed without our ack (expelled or superseded).
    phase1_ = false;
    revert_msgs_.clear();
  }
  announced_.clear();
  for (const auto& rv : post_commit_reverts_) {
    Message msg;
    msg.kind = MessageKind::delta_revert;
    msg.origin = id_;
    msg.request_id = rv.request_id;
    if (view_.state(rv.parity) == ServerState::normal) {
      net_.send(id_, rv.parity, std::move(msg));
    } else if (auto r = view_.redirect(rv.parity, rv.list)) {
      msg.flags = msg_flags::kStash;
      msg.target = rv.parity;
      net_.send(id_, *r, std::move(msg));
    }
  }
  post_commit_reverts_.clear();
  for (auto& [p, msg] : post_commit_stash_) {
    const auto list = map_key(msg.key, config_.lists).stripe_list;
    if (view_.state(p) == ServerState::normal) {
      net_.send(id_, p, msg);
    } else if (auto r = view_.redirect(p, list)) {
      msg.flags |= msg_flags::kStash;
      msg.target = p;
      net_.send(id_, *r, msg);
    }
  }
  post_commit_stash_.clear();
  release_parked();
}

void ProxyNode::release_parked() {
  auto parked = std::move(parked_);
  parked_.clear();
  for (auto rid : parked) {
    if (requests_.count(rid)) dispatch(rid);
  }
}

}  // namespace eckv
