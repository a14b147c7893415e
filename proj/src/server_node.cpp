#include "eckv/server_node.hpp"

#include <algorithm>
#include <cstring>

namespace eckv {
namespace {

bool is_ack(const Message& m) {
  if (m.reply) return true;
  switch (m.kind) {
    case MessageKind::set_ack:
    case MessageKind::get_ack:
    case MessageKind::update_ack:
    case MessageKind::delete_ack:
    case MessageKind::state_ack:
    case MessageKind::degraded_route_resp:
    case MessageKind::reconstruct_chunk:
      return true;
    default:
      return false;
  }
}

std::string user_key(const std::string& index_key) { return index_key.substr(1); }

}  // namespace

ServerNode::ServerNode(ServerId id, const ClusterConfig& config, Transport& net,
                       CheckpointStore& checkpoints)
    : id_(id),
      config_(config),
      net_(net),
      checkpoints_(checkpoints),
      codec_(config.code),
      store_(config.store_config()) {}

void ServerNode::start() {
  heartbeat_tick();
  net_.schedule(id_, config_.checkpoint_interval, [this] { checkpoint_tick(); }, true);
}

void ServerNode::restart() {
  // Volatile request state does not survive; chunks, replicas and backups do.
  ++incarnation_;
  waiters_.clear();
  fanouts_.clear();
  deferred_.clear();
  reconstructions_.clear();
  migrations_.clear();
  degraded_pending_ = 0;
  inflight_.clear();
  locks_.clear();
  held_.clear();
  drain_waiters_.clear();
  for (auto& [id, ps] : pending_seals_) ps.refetching = false;
  start();
  for (const auto& [id, ps] : pending_seals_) {
    net_.schedule(id_, 2 * config_.request_timeout, [this, id = id] {
      if (pending_seals_.count(id)) refetch_seal(id);
    });
  }
}

// ---------------------------------------------------------------- plumbing

void ServerNode::send(NodeId to, Message m) { net_.send(id_, to, std::move(m)); }

void ServerNode::reply(NodeId to, const Message& request, Message r) {
  if (auto k = ack_kind(request.kind)) {
    r.kind = *k;
    r.reply = false;
  } else {
    r.kind = request.kind;
    r.reply = true;
  }
  r.seq = request.seq;
  send(to, std::move(r));
}

std::uint64_t ServerNode::await(std::function<void(const Message&)> fn) {
  const std::uint64_t seq = next_seq_++;
  waiters_[seq] = std::move(fn);
  return seq;
}

void ServerNode::handle_reply(NodeId, const Message& m) {
  auto it = waiters_.find(m.seq);
  if (it == waiters_.end()) return;
  auto fn = std::move(it->second);
  waiters_.erase(it);
  fn(m);
}

const StripeList& ServerNode::list_of_key(const std::string& key, int* position) const {
  const auto p = map_key(key, config_.lists);
  if (position) *position = p.position;
  return config_.list(p.stripe_list);
}

int ServerNode::my_position(std::uint16_t list) const { return config_.list(list).position_of(id_); }

bool ServerNode::route_to_member(std::uint16_t list, ServerId target, Message& m) {
  switch (view_.state(target)) {
    case ServerState::normal:
      if (net_.send(id_, target, m)) return true;
      break;
    case ServerState::intermediate:
      break;
    case ServerState::degraded:
    case ServerState::coordinated_normal:
      if (auto r = view_.redirect(target, list)) {
        Message s = m;
        s.flags |= msg_flags::kStash;
        s.target = target;
        if (net_.send(id_, *r, std::move(s))) return true;
      }
      break;
  }
  deferred_[target].emplace_back(list, m);
  return false;
}

void ServerNode::fan_out(std::uint16_t list, const std::vector<ServerId>& targets,
                         const Message& proto, std::function<void(bool)> done) {
  const std::uint64_t fid = next_fanout_++;
  FanOut& f = fanouts_[fid];
  f.list = list;
  f.done = std::move(done);
  for (ServerId t : targets) {
    Message m = proto;
    m.seq = await([this, fid, t](const Message& r) { fanout_ack(fid, t, r.status == AckStatus::ok); });
    f.outstanding[t] = {m.seq, m};
  }
  for (ServerId t : targets) {
    auto it = fanouts_.find(fid);
    auto& [seq, m] = it->second.outstanding[t];
    Message copy = m;
    if (!route_to_member(list, t, copy)) {
      waiters_.erase(seq);
      it->second.outstanding.erase(t);
    }
  }
  auto it = fanouts_.find(fid);
  if (it != fanouts_.end() && it->second.outstanding.empty()) {
    auto cb = std::move(it->second.done);
    const bool failed = it->second.failed;
    fanouts_.erase(it);
    cb(!failed);
  }
}

void ServerNode::fanout_ack(std::uint64_t fid, ServerId target, bool ok) {
  auto it = fanouts_.find(fid);
  if (it == fanouts_.end() || !it->second.outstanding.erase(target)) return;
  if (!ok) it->second.failed = true;
  if (it->second.outstanding.empty()) {
    auto cb = std::move(it->second.done);
    const bool failed = it->second.failed;
    fanouts_.erase(it);
    cb(!failed);
  }
}

void ServerNode::revisit_fanouts() {
  std::vector<std::uint64_t> finished;
  for (auto& [fid, f] : fanouts_) {
    for (auto it = f.outstanding.begin(); it != f.outstanding.end();) {
      const ServerId t = it->first;
      const ServerState st = view_.state(t);
      if (st == ServerState::intermediate) {
        // The target was announced as failed: keep the change for its
        // stand-in and stop waiting on it.
        waiters_.erase(it->second.first);
        deferred_[t].emplace_back(f.list, it->second.second);
        it = f.outstanding.erase(it);
        continue;
      }
      if (st != ServerState::normal && !it->second.second.has_flag(msg_flags::kStash)) {
        it->second.second.flags |= msg_flags::kStash;
        if (auto r = view_.redirect(t, f.list)) {
          Message s = it->second.second;
          s.target = t;
          net_.send(id_, *r, std::move(s));
        }
      }
      ++it;
    }
    if (f.outstanding.empty()) finished.push_back(fid);
  }
  for (auto fid : finished) {
    auto it = fanouts_.find(fid);
    auto cb = std::move(it->second.done);
    const bool failed = it->second.failed;
    fanouts_.erase(it);
    cb(!failed);
  }
}

void ServerNode::flush_deferred() {
  for (auto it = deferred_.begin(); it != deferred_.end();) {
    const ServerId t = it->first;
    const ServerState st = view_.state(t);
    if (st == ServerState::intermediate) {
      ++it;
      continue;
    }
    for (auto& [list, m] : it->second) {
      m.seq = 0;  // fire and forget: the request was already acknowledged
      if (st == ServerState::normal) {
        send(t, m);
      } else if (auto r = view_.redirect(t, list)) {
        m.flags |= msg_flags::kStash;
        m.target = t;
        send(*r, m);
      }
    }
    it = deferred_.erase(it);
  }
}

void ServerNode::heartbeat_tick() {
  Message hb;
  hb.kind = MessageKind::heartbeat;
  hb.origin = id_;
  hb.epoch = incarnation_;
  send(kCoordinatorId, hb);
  net_.schedule(id_, config_.heartbeat_interval, [this] { heartbeat_tick(); }, true);
}

void ServerNode::checkpoint_tick() {
  if (mapping_dirty_) checkpoint();
  net_.schedule(id_, config_.checkpoint_interval, [this] { checkpoint_tick(); }, true);
}

void ServerNode::checkpoint() {
  checkpoints_.save(id_, mapping_);
  ++stats_.checkpoints;
  mapping_dirty_ = false;
  mappings_since_checkpoint_ = 0;
  for (NodeId p : config_.proxy_ids()) {
    Message m;
    m.kind = MessageKind::checkpoint_ack;
    m.origin = id_;
    send(p, m);
  }
}

void ServerNode::on_message(NodeId from, Message m) {
  if (is_ack(m)) {
    handle_reply(from, m);
    return;
  }
  const bool stashed = m.has_flag(msg_flags::kStash);
  auto redirected = [&] {
    if (!m.has_flag(msg_flags::kDegraded)) return false;
    int pos = 0;
    return list_of_key(m.key, &pos).data_servers[pos] != id_;
  };
  switch (m.kind) {
    case MessageKind::set:
      if (stashed) stash(from, m);
      else if (m.has_flag(msg_flags::kParityRole)) parity_set(from, m);
      else if (redirected()) degraded(from, m);
      else data_set(from, m);
      break;
    case MessageKind::get:
      redirected() ? degraded(from, m) : data_get(from, m);
      break;
    case MessageKind::update:
      redirected() ? degraded(from, m) : data_update(from, m);
      break;
    case MessageKind::del:
      redirected() ? degraded(from, m) : data_delete(from, m);
      break;
    case MessageKind::seal:
      stashed ? stash(from, m) : parity_seal(from, m);
      break;
    case MessageKind::delta_apply:
      stashed ? stash(from, m) : parity_delta(from, m);
      break;
    case MessageKind::delta_revert:
      stashed ? stash(from, m) : parity_revert(from, m);
      break;
    case MessageKind::remove_replica:
      stashed ? stash(from, m) : parity_remove(from, m);
      break;
    case MessageKind::state_announce:
    case MessageKind::state_commit:
      handle_view(m);
      break;
    case MessageKind::reconstruct_fetch:
      handle_fetch(from, m);
      break;
    case MessageKind::migrate_object:
      if (from == kCoordinatorId) begin_migration(m.target);
      else receive_migration(from, m);
      break;
    case MessageKind::checkpoint_begin:
      checkpoint();
      break;
    default:
      break;
  }
}

// --------------------------------------------------------------- data role

void ServerNode::data_set(NodeId from, const Message& m) {
  ++stats_.sets;
  Message r;
  r.key = m.key;
  if (!m.record) {
    r.status = AckStatus::failed;
    reply(from, m, r);
    return;
  }
  int pos = 0;
  const StripeList& list = list_of_key(m.record->key, &pos);
  const std::string idx = m.record->index_key();
  if (list.data_servers[pos] != id_ || store_.find(idx)) {
    r.status = AckStatus::failed;
    reply(from, m, r);
    return;
  }
  AppendResult res;
  try {
    res = store_.append_object(list.id, static_cast<std::uint8_t>(pos), *m.record);
  } catch (const DataModelError&) {
    r.status = AckStatus::failed;
    reply(from, m, r);
    return;
  }
  mapping_[m.record->key] = res.id;
  mapping_dirty_ = true;
  ++mappings_since_checkpoint_;
  r.chunk_id = res.id;
  if (m.has_flag(msg_flags::kDegraded)) {
    // Routed here because a parity is down: the proxy did not send the
    // replicas, so this server does.
    Message s;
    s.kind = MessageKind::set;
    s.flags = msg_flags::kParityRole;
    s.key = m.record->key;
    s.record = *m.record;
    s.origin = m.origin;
    fan_out(list.id, list.parity_servers, s, [this, from, m, r](bool) mutable { reply(from, m, r); });
  } else {
    reply(from, m, r);
  }
  after_append(res);
  if (mappings_since_checkpoint_ >= config_.checkpoint_every) checkpoint();
}

void ServerNode::after_append(const AppendResult& r) {
  for (const auto& ev : r.seals) send_seal(ev);
}

void ServerNode::send_seal(const SealEvent& ev) {
  ++stats_.seals;
  for (const auto& k : ev.keys) mapping_[user_key(k)] = ev.id;
  mapping_dirty_ = true;
  // Sealed IDs must reach secondary storage before anyone needs them to
  // locate a lost object.
  checkpoint();
  Message s;
  s.kind = MessageKind::seal;
  s.origin = id_;
  s.chunk_id = ev.id;
  s.keys = ev.keys;
  const StripeKey key{id_, ev.id.stripe_list, ev.id.stripe};
  auto go = [this, key, s] {
    fan_out(s.chunk_id->stripe_list, config_.list(s.chunk_id->stripe_list).parity_servers, s,
            tracked(key, [](bool) {}));
  };
  if (!hold_if_locked(key, go)) go();
}

void ServerNode::flush() {
  for (const auto& ev : store_.seal_all()) send_seal(ev);
}

void ServerNode::data_get(NodeId from, const Message& m) {
  ++stats_.gets;
  Message r;
  r.key = m.key;
  if (auto loc = store_.find(whole_index_key(m.key))) {
    r.value = loc->record.value;
  } else {
    r.status = AckStatus::not_found;
  }
  reply(from, m, r);
}

void ServerNode::data_update(NodeId from, const Message& m) {
  const std::string idx = whole_index_key(m.key);
  auto loc = store_.find(idx);
  if (loc && loc->sealed &&
      hold_if_locked({id_, loc->chunk_id.stripe_list, loc->chunk_id.stripe},
                     [this, from, m] { data_update(from, m); })) {
    return;
  }
  ++stats_.updates;
  Message r;
  r.key = m.key;
  if (!loc || loc->record.value.size() != m.value.size()) {
    r.status = loc ? AckStatus::failed : AckStatus::not_found;
    reply(from, m, r);
    return;
  }
  Modification mod = store_.update_value(idx, m.value);
  Message d;
  d.kind = MessageKind::delta_apply;
  d.key = idx;
  d.chunk_id = mod.id;
  d.offset = static_cast<std::uint32_t>(mod.delta.offset);
  d.aux_offset = static_cast<std::uint32_t>(mod.delta.offset - mod.object_offset);
  d.bytes = std::move(mod.delta.bytes);
  d.origin = m.origin;
  d.request_id = m.request_id;
  d.watermark = m.watermark;
  d.request_kind = static_cast<std::uint8_t>(MessageKind::update);
  const auto& list = config_.list(mod.id.stripe_list);
  auto done = [this, from, m](bool ok) {
    Message r;
    r.key = m.key;
    if (!ok) r.status = AckStatus::failed;
    reply(from, m, r);
  };
  if (mod.sealed) fan_out(list.id, list.parity_servers, d, tracked({id_, list.id, mod.id.stripe}, done));
  else fan_out(list.id, list.parity_servers, d, done);
}

void ServerNode::data_delete(NodeId from, const Message& m) {
  const std::string idx = whole_index_key(m.key);
  auto loc = store_.find(idx);
  if (loc && loc->sealed &&
      hold_if_locked({id_, loc->chunk_id.stripe_list, loc->chunk_id.stripe},
                     [this, from, m] { data_delete(from, m); })) {
    return;
  }
  ++stats_.deletes;
  if (!loc) {
    Message r;
    r.key = m.key;
    r.status = AckStatus::not_found;
    reply(from, m, r);
    return;
  }
  Modification mod = store_.delete_object(idx);
  mapping_.erase(m.key);
  mapping_dirty_ = true;
  Message d;
  d.key = idx;
  d.origin = m.origin;
  d.request_id = m.request_id;
  d.watermark = m.watermark;
  d.request_kind = static_cast<std::uint8_t>(MessageKind::del);
  if (mod.sealed) {
    d.kind = MessageKind::delta_apply;
    d.chunk_id = mod.id;
    d.offset = static_cast<std::uint32_t>(mod.delta.offset);
    d.bytes = std::move(mod.delta.bytes);
  } else {
    d.kind = MessageKind::remove_replica;
  }
  const auto& list = config_.list(mod.id.stripe_list);
  auto done = [this, from, m](bool ok) {
    Message r;
    r.key = m.key;
    if (!ok) r.status = AckStatus::failed;
    reply(from, m, r);
  };
  if (mod.sealed) fan_out(list.id, list.parity_servers, d, tracked({id_, list.id, mod.id.stripe}, done));
  else fan_out(list.id, list.parity_servers, d, done);
}

void ServerNode::local_upsert(const ObjectRecord& rec, std::function<void(bool)> done) {
  const std::string idx = rec.index_key();
  int pos = 0;
  const StripeList& list = list_of_key(rec.key, &pos);
  auto loc = store_.find(idx);
  if (loc && loc->sealed &&
      hold_if_locked({id_, loc->chunk_id.stripe_list, loc->chunk_id.stripe},
                     [this, rec, done] { local_upsert(rec, done); })) {
    return;
  }
  if (loc && loc->record.value.size() == rec.value.size()) {
    Modification mod = store_.update_value(idx, rec.value);
    Message d;
    d.kind = MessageKind::delta_apply;
    d.key = idx;
    d.chunk_id = mod.id;
    d.offset = static_cast<std::uint32_t>(mod.delta.offset);
    d.aux_offset = static_cast<std::uint32_t>(mod.delta.offset - mod.object_offset);
    d.bytes = std::move(mod.delta.bytes);
    d.origin = id_;
    d.request_kind = static_cast<std::uint8_t>(MessageKind::update);
    if (mod.sealed) done = tracked({id_, list.id, mod.id.stripe}, std::move(done));
    fan_out(list.id, list.parity_servers, d, std::move(done));
    return;
  }
  if (loc) {
    Modification mod = store_.delete_object(idx);
    Message d;
    d.key = idx;
    d.origin = id_;
    if (mod.sealed) {
      d.kind = MessageKind::delta_apply;
      d.chunk_id = mod.id;
      d.offset = static_cast<std::uint32_t>(mod.delta.offset);
      d.bytes = std::move(mod.delta.bytes);
    } else {
      d.kind = MessageKind::remove_replica;
    }
    std::function<void(bool)> next = [this, rec, done](bool ok) {
      if (!ok) return done(false);
      local_upsert(rec, done);
    };
    if (mod.sealed) next = tracked({id_, list.id, mod.id.stripe}, std::move(next));
    fan_out(list.id, list.parity_servers, d, std::move(next));
    return;
  }
  AppendResult res;
  try {
    res = store_.append_object(list.id, static_cast<std::uint8_t>(pos), rec);
  } catch (const DataModelError&) {
    done(false);
    return;
  }
  mapping_[rec.key] = res.id;
  mapping_dirty_ = true;
  Message s;
  s.kind = MessageKind::set;
  s.flags = msg_flags::kParityRole;
  s.key = rec.key;
  s.record = rec;
  s.origin = id_;
  fan_out(list.id, list.parity_servers, s, std::move(done));
  after_append(res);
}

// ------------------------------------------------------------- parity role

void ServerNode::parity_set(NodeId from, const Message& m) {
  Message r;
  r.key = m.key;
  r.target = id_;
  if (!m.record) {
    r.status = AckStatus::failed;
    reply(from, m, r);
    return;
  }
  replicas_[m.record->index_key()] = *m.record;
  reply(from, m, r);
  std::vector<ChunkId> waiting;
  for (const auto& [id, ps] : pending_seals_) waiting.push_back(id);
  for (const auto& id : waiting) try_apply_seal(id);
}

void ServerNode::parity_seal(NodeId from, const Message& m) {
  Message r;
  r.target = id_;
  if (!m.chunk_id || my_position(m.chunk_id->stripe_list) < config_.code.k) {
    r.status = AckStatus::failed;
    reply(from, m, r);
    return;
  }
  reply(from, m, r);
  const ChunkId id = *m.chunk_id;
  if (sealed_data_.count(id) || pending_seals_.count(id)) return;
  PendingSeal& ps = pending_seals_[id];
  ps.from = m.origin;
  ps.keys = m.keys;
  if (!try_apply_seal(id)) {
    net_.schedule(id_, 2 * config_.request_timeout, [this, id] {
      if (pending_seals_.count(id)) refetch_seal(id);
    });
  }
}

bool ServerNode::try_apply_seal(const ChunkId& id) {
  auto it = pending_seals_.find(id);
  if (it == pending_seals_.end()) return false;
  PendingSeal& ps = it->second;
  for (const auto& k : ps.keys) {
    if (!replicas_.count(k)) return false;
  }
  ChunkBuffer data(config_.chunk_size, 0);
  std::size_t pos = 0;
  std::map<std::string, std::size_t> offsets;
  for (const auto& k : ps.keys) {
    const auto bytes = replicas_.at(k).serialize();
    if (pos + bytes.size() > data.size()) break;  // cannot happen for a well-formed seal
    std::memcpy(data.data() + pos, bytes.data(), bytes.size());
    offsets[k] = pos;
    pos += bytes.size();
  }
  const int mine = my_position(id.stripe_list);
  ChunkBuffer& parity = parity_chunks_[id.with_position(mine)];
  if (parity.empty()) parity.assign(config_.chunk_size, 0);
  codec_.apply_delta_in_place(parity, mine, id.position,
                              DataDelta{0, std::vector<std::uint8_t>(data.begin(), data.begin() + pos)});
  sealed_data_.insert(id);
  ++stats_.seals_applied;
  for (const auto& k : ps.keys) replicas_.erase(k);
  for (auto& [kid, list] : backups_) {
    for (auto& b : list) {
      if (!b.replica_target || b.removed) continue;
      if (auto o = offsets.find(b.key); o != offsets.end()) {
        b.replica_target = false;
        b.chunk_id = id;
        b.offset += static_cast<std::uint32_t>(o->second);
      }
    }
  }
  auto queued = std::move(ps.queued);
  pending_seals_.erase(it);
  for (auto& [from, msg] : queued) parity_delta(from, msg);
  return true;
}

void ServerNode::refetch_seal(const ChunkId& id) {
  auto it = pending_seals_.find(id);
  if (it == pending_seals_.end() || it->second.refetching) return;
  it->second.refetching = true;
  ++stats_.seal_refetches;
  Message f;
  f.kind = MessageKind::reconstruct_fetch;
  f.chunk_id = id;
  f.keys = it->second.keys;
  f.seq = await([this, id](const Message& r) {
    auto it = pending_seals_.find(id);
    if (it == pending_seals_.end()) return;
    if (r.status != AckStatus::ok) {
      it->second.refetching = false;
      net_.schedule(id_, 2 * config_.request_timeout, [this, id] {
        if (pending_seals_.count(id)) refetch_seal(id);
      });
      return;
    }
    // The data server's current chunk already reflects every delta it sent
    // before answering, so the queued ones are recorded but not applied.
    PendingSeal ps = std::move(it->second);
    pending_seals_.erase(it);
    ChunkBuffer data(config_.chunk_size, 0);
    std::size_t pos = 0;
    for (const auto& rec : r.records) {
      const auto bytes = rec.serialize();
      if (pos + bytes.size() > data.size()) break;
      std::memcpy(data.data() + pos, bytes.data(), bytes.size());
      pos += bytes.size();
      replicas_.erase(rec.index_key());
    }
    for (const auto& k : ps.keys) replicas_.erase(k);
    const int mine = my_position(id.stripe_list);
    ChunkBuffer& parity = parity_chunks_[id.with_position(mine)];
    if (parity.empty()) parity.assign(config_.chunk_size, 0);
    codec_.apply_delta_in_place(parity, mine, id.position,
                                DataDelta{0, std::vector<std::uint8_t>(data.begin(), data.begin() + pos)});
    sealed_data_.insert(id);
    ++stats_.seals_applied;
    for (auto& [from, msg] : ps.queued) {
      if (msg.request_id) {
        DeltaBackup b;
        b.proxy = msg.origin;
        b.seq = msg.request_id;
        b.chunk_id = id;
        b.offset = msg.offset;
        b.bytes = msg.bytes;
        backups_[{msg.origin, msg.request_id}].push_back(std::move(b));
      }
      Message ack;
      ack.target = id_;
      reply(from, msg, ack);
    }
  });
  send(it->second.from, f);
}

void ServerNode::parity_delta(NodeId from, const Message& m) {
  Message r;
  r.target = id_;
  const std::pair<NodeId, std::uint64_t> kid{m.origin, m.request_id};
  const bool tracked = m.request_id != 0;
  if (tracked && (reverted_.count(kid) || backups_.count(kid))) {
    // Reverted before it arrived, or a duplicate forwarded by a stand-in.
    reply(from, m, r);
    return;
  }
  if (!m.chunk_id) {
    r.status = AckStatus::failed;
    reply(from, m, r);
    return;
  }
  const ChunkId cid = *m.chunk_id;
  DeltaBackup b;
  b.proxy = m.origin;
  b.seq = m.request_id;
  b.bytes = m.bytes;
  if (cid.unsealed()) {
    auto it = replicas_.find(m.key);
    if (it == replicas_.end()) {
      r.status = AckStatus::failed;
      reply(from, m, r);
      return;
    }
    auto bytes = it->second.serialize();
    if (m.aux_offset + m.bytes.size() > bytes.size()) {
      r.status = AckStatus::failed;
      reply(from, m, r);
      return;
    }
    xor_delta_into(bytes, DataDelta{m.aux_offset, m.bytes});
    it->second = parse_object(bytes).record;
    b.replica_target = true;
    b.key = m.key;
    b.offset = m.aux_offset;
  } else {
    if (auto ps = pending_seals_.find(cid); ps != pending_seals_.end()) {
      ps->second.queued.emplace_back(from, m);
      return;
    }
    const int mine = my_position(cid.stripe_list);
    if (!sealed_data_.count(cid) || mine < config_.code.k ||
        m.offset + m.bytes.size() > config_.chunk_size) {
      r.status = AckStatus::failed;
      reply(from, m, r);
      return;
    }
    ChunkBuffer& parity = parity_chunks_[cid.with_position(mine)];
    codec_.apply_delta_in_place(parity, mine, cid.position, DataDelta{m.offset, m.bytes});
    b.chunk_id = cid;
    b.offset = m.offset;
  }
  ++stats_.deltas_applied;
  if (tracked) backups_[kid].push_back(std::move(b));
  collect_garbage(m.origin, m.watermark);
  reply(from, m, r);
}

void ServerNode::undo(const DeltaBackup& b) {
  if (b.removed) {
    replicas_[b.key] = *b.removed;
    return;
  }
  if (b.replica_target) {
    auto it = replicas_.find(b.key);
    if (it == replicas_.end()) return;
    auto bytes = it->second.serialize();
    xor_delta_into(bytes, DataDelta{b.offset, b.bytes});
    it->second = parse_object(bytes).record;
    return;
  }
  const int mine = my_position(b.chunk_id.stripe_list);
  auto it = parity_chunks_.find(b.chunk_id.with_position(mine));
  if (it == parity_chunks_.end()) return;
  codec_.apply_delta_in_place(it->second, mine, b.chunk_id.position, DataDelta{b.offset, b.bytes});
}

void ServerNode::parity_revert(NodeId from, const Message& m) {
  const std::pair<NodeId, std::uint64_t> kid{m.origin, m.request_id};
  if (auto it = backups_.find(kid); it != backups_.end()) {
    ++stats_.reverts;
    for (auto b = it->second.rbegin(); b != it->second.rend(); ++b) undo(*b);
    backups_.erase(it);
  } else {
    reverted_.insert(kid);
  }
  Message r;
  r.target = id_;
  reply(from, m, r);
}

void ServerNode::parity_remove(NodeId from, const Message& m) {
  Message r;
  r.target = id_;
  const std::pair<NodeId, std::uint64_t> kid{m.origin, m.request_id};
  const bool tracked = m.request_id != 0;
  if (tracked && (reverted_.count(kid) || backups_.count(kid))) {
    reply(from, m, r);
    return;
  }
  if (auto it = replicas_.find(m.key); it != replicas_.end()) {
    if (tracked) {
      DeltaBackup b;
      b.proxy = m.origin;
      b.seq = m.request_id;
      b.kind = MessageKind::remove_replica;
      b.key = m.key;
      b.removed = it->second;
      backups_[kid].push_back(std::move(b));
    }
    replicas_.erase(it);
  }
  collect_garbage(m.origin, m.watermark);
  reply(from, m, r);
}

void ServerNode::collect_garbage(NodeId proxy, std::uint64_t watermark) {
  if (watermark == 0) return;
  backups_.erase(backups_.lower_bound({proxy, 0}), backups_.upper_bound({proxy, watermark}));
  reverted_.erase(reverted_.lower_bound({proxy, 0}), reverted_.upper_bound({proxy, watermark}));
}

void ServerNode::stash(NodeId from, const Message& m) {
  const ServerId target = m.target;
  Message s = m;
  s.flags &= static_cast<std::uint8_t>(~msg_flags::kStash);
  Message ack;
  ack.target = target;
  reply(from, m, ack);
  ++stats_.stashed;
  auto mig = migrations_.find(target);
  if (mig != migrations_.end() && mig->second.started) {
    s.seq = await([this, target](const Message&) { migration_step_done(target); });
    ++mig->second.outstanding;
    send(target, s);
  } else if (mig == migrations_.end() && view_.state(target) == ServerState::normal) {
    s.seq = 0;
    send(target, s);
  } else {
    stash_[target].push_back(std::move(s));
  }
}

// ---------------------------------------------------------------- any role

bool ServerNode::hold_if_locked(const StripeKey& key, std::function<void()> retry) {
  if (!locks_.count(key)) return false;
  held_[key].push_back(std::move(retry));
  return true;
}

std::function<void(bool)> ServerNode::tracked(const StripeKey& key, std::function<void(bool)> done) {
  ++inflight_[key];
  return [this, key, done = std::move(done)](bool ok) {
    auto it = inflight_.find(key);
    if (it != inflight_.end() && --it->second == 0) {
      inflight_.erase(it);
      auto waiters = std::move(drain_waiters_[key]);
      drain_waiters_.erase(key);
      for (auto& w : waiters) w();
    }
    done(ok);
  };
}

void ServerNode::release_lock(const StripeKey& key, const LockHolder& holder) {
  auto it = locks_.find(key);
  if (it == locks_.end() || !it->second.erase(holder) || !it->second.empty()) return;
  locks_.erase(it);
  auto work = std::move(held_[key]);
  held_.erase(key);
  for (auto& w : work) w();
}

void ServerNode::handle_fetch(NodeId from, const Message& m) {
  if (m.chunk_id && (m.has_flag(msg_flags::kLock) || m.has_flag(msg_flags::kRelease))) {
    const ServerId owner = m.has_flag(msg_flags::kDegraded) ? m.target : id_;
    const StripeKey key{owner, m.chunk_id->stripe_list, m.chunk_id->stripe};
    const LockHolder holder{m.origin, m.request_id};
    if (m.has_flag(msg_flags::kRelease)) {
      release_lock(key, holder);
      return;
    }
    if (locks_[key].insert(holder).second) {
      // A stand-in that fails mid-read must not pin the stripe forever.
      net_.schedule(id_, 4 * config_.request_timeout, [this, key, holder] { release_lock(key, holder); });
    }
    Message plain = m;
    plain.flags &= static_cast<std::uint8_t>(~msg_flags::kLock);
    auto answer = [this, from, plain, owner] {
      if (owner != id_) {
        Message r;
        r.chunk_id = plain.chunk_id;
        reply(from, plain, r);
      } else {
        handle_fetch(from, plain);
      }
    };
    if (inflight_.count(key)) drain_waiters_[key].push_back(answer);
    else answer();
    return;
  }
  Message r;
  r.chunk_id = m.chunk_id;
  r.key = m.key;
  if (!m.chunk_id) {
    r.status = AckStatus::failed;
  } else if (!m.keys.empty()) {
    if (auto ref = store_.find_chunk(*m.chunk_id)) {
      const Chunk& c = store_.chunk(*ref);
      for (auto& [off, rec] : parse_chunk_objects(c.content)) r.records.push_back(std::move(rec));
    } else {
      r.status = AckStatus::failed;
    }
  } else if (m.chunk_id->unsealed()) {
    if (auto it = replicas_.find(m.key); it != replicas_.end()) {
      r.record = it->second;
    } else {
      r.status = AckStatus::not_found;
    }
  } else {
    const ChunkId cid = *m.chunk_id;
    const int mine = my_position(cid.stripe_list);
    if (mine != cid.position) {
      r.status = AckStatus::failed;
    } else if (cid.position < config_.code.k) {
      if (auto ref = store_.find_chunk(cid)) r.bytes = store_.chunk(*ref).content;
    } else {
      for (const auto& [pid, ps] : pending_seals_) {
        if (pid.stripe_list == cid.stripe_list && pid.stripe == cid.stripe) r.status = AckStatus::failed;
      }
      if (r.status == AckStatus::ok) {
        if (auto it = parity_chunks_.find(cid); it != parity_chunks_.end()) r.bytes = it->second;
      }
    }
  }
  reply(from, m, r);
}

void ServerNode::handle_view(const Message& m) {
  if (!view_.apply(m)) return;
  revisit_fanouts();
  flush_deferred();
  for (auto it = stash_.begin(); it != stash_.end();) {
    if (view_.state(it->first) == ServerState::normal && !migrations_.count(it->first)) {
      for (auto& s : it->second) {
        s.seq = 0;
        send(it->first, s);
      }
      it = stash_.erase(it);
    } else {
      ++it;
    }
  }
}

// -------------------------------------------------- redirected-server role

ChunkStore& ServerNode::cache_for(ServerId owner) {
  auto& c = caches_[owner];
  if (!c) c = std::make_unique<ChunkStore>(config_.store_config());
  return *c;
}

void ServerNode::degraded_done() {
  if (degraded_pending_ > 0) --degraded_pending_;
  if (degraded_pending_ == 0) {
    std::vector<ServerId> ready;
    for (const auto& [t, mig] : migrations_) {
      if (!mig.started) ready.push_back(t);
    }
    for (ServerId t : ready) run_migration(t);
  }
}

void ServerNode::degraded(NodeId from, const Message& m) {
  ++stats_.degraded_requests;
  int pos = 0;
  const StripeList& list = list_of_key(m.key, &pos);
  const ServerId owner = list.data_servers[pos];
  const std::string idx = whole_index_key(m.key);
  Message r;
  r.key = m.key;
  for (ServerId s : list.members()) {
    if (migrations_.count(s)) {
      r.status = AckStatus::redirect;
      reply(from, m, r);
      return;
    }
  }

  if (m.kind == MessageKind::set) {
    if (!m.record) {
      r.status = AckStatus::failed;
    } else {
      redirect_buffer_[idx] = BufferedObject{*m.record, m.target};
      buffer_deleted_.erase(idx);
    }
    reply(from, m, r);
    return;
  }
  if (auto it = redirect_buffer_.find(idx); it != redirect_buffer_.end()) {
    if (m.kind == MessageKind::get) {
      r.value = it->second.record.value;
    } else if (m.kind == MessageKind::update) {
      if (it->second.record.value.size() != m.value.size()) r.status = AckStatus::failed;
      else it->second.record.value = m.value;
    } else {
      redirect_buffer_.erase(it);
      buffer_deleted_.insert(idx);
    }
    reply(from, m, r);
    return;
  }
  if (buffer_deleted_.count(idx)) {
    r.status = AckStatus::not_found;
    reply(from, m, r);
    return;
  }

  ++degraded_pending_;
  locate(idx, m.chunk_id, owner, [this, from, m, idx, owner, pos, list_id = list.id](Where w) {
    Message r;
    r.key = m.key;
    const StripeList& list = config_.list(list_id);
    if (w == Where::none) {
      r.status = AckStatus::not_found;
      reply(from, m, r);
      return degraded_done();
    }
    if (w == Where::chunk) {
      ChunkStore& cache = cache_for(owner);
      auto loc = cache.find(idx);
      if (!loc) {
        r.status = AckStatus::not_found;
      } else if (m.kind == MessageKind::get) {
        r.value = loc->record.value;
      } else if (m.kind == MessageKind::update && loc->record.value.size() != m.value.size()) {
        r.status = AckStatus::failed;
      } else if (hold_if_locked({owner, loc->chunk_id.stripe_list, loc->chunk_id.stripe},
                                [this, from, m] { degraded(from, m); })) {
        return degraded_done();
      } else {
        Modification mod = m.kind == MessageKind::update ? cache.update_value(idx, m.value)
                                                         : cache.delete_object(idx);
        dirty_chunks_[owner].insert(mod.id);
        Message d;
        d.kind = MessageKind::delta_apply;
        d.key = idx;
        d.chunk_id = mod.id;
        d.offset = static_cast<std::uint32_t>(mod.delta.offset);
        d.aux_offset = static_cast<std::uint32_t>(mod.delta.offset - mod.object_offset);
        d.bytes = std::move(mod.delta.bytes);
        d.origin = m.origin;
        d.request_id = m.request_id;
        d.watermark = m.watermark;
        d.request_kind = static_cast<std::uint8_t>(m.kind);
        fan_out(list.id, list.parity_servers, d,
                tracked({owner, list.id, mod.id.stripe}, [this, from, m](bool ok) {
                  Message r;
                  r.key = m.key;
                  if (!ok) r.status = AckStatus::failed;
                  reply(from, m, r);
                  degraded_done();
                }));
        return;
      }
      reply(from, m, r);
      return degraded_done();
    }
    // Object of a chunk that was still unsealed when its server failed.
    ReplicaCopy& rc = replica_cache_.at(idx);
    if (rc.deleted) {
      r.status = AckStatus::not_found;
    } else if (m.kind == MessageKind::get) {
      r.value = rc.record.value;
    } else if (m.kind == MessageKind::update && rc.record.value.size() != m.value.size()) {
      r.status = AckStatus::failed;
    } else {
      Message d;
      d.key = idx;
      d.origin = m.origin;
      d.request_id = m.request_id;
      d.watermark = m.watermark;
      d.request_kind = static_cast<std::uint8_t>(m.kind);
      if (m.kind == MessageKind::update) {
        const auto before = rc.record.serialize();
        rc.record.value = m.value;
        const auto after = rc.record.serialize();
        DataDelta delta = compute_delta(before, after, 0);
        d.kind = MessageKind::delta_apply;
        d.chunk_id = ChunkId{list.id, ChunkId::kUnsealedStripe, static_cast<std::uint8_t>(pos)};
        d.aux_offset = 0;
        d.bytes = std::move(delta.bytes);
      } else {
        rc.deleted = true;
        d.kind = MessageKind::remove_replica;
      }
      rc.dirty = true;
      fan_out(list.id, list.parity_servers, d, [this, from, m](bool ok) {
        Message r;
        r.key = m.key;
        if (!ok) r.status = AckStatus::failed;
        reply(from, m, r);
        degraded_done();
      });
      return;
    }
    reply(from, m, r);
    degraded_done();
  });
}

void ServerNode::locate(const std::string& idx, const std::optional<ChunkId>& chunk, ServerId owner,
                        std::function<void(Where)> cb) {
  if (!chunk) return cb(Where::none);
  if (chunk->unsealed()) {
    if (replica_cache_.count(idx)) return cb(Where::replica);
    return fetch_replica(idx, *chunk, 0, std::move(cb));
  }
  ChunkStore& cache = cache_for(owner);
  if (cache.find_chunk(*chunk)) return cb(Where::chunk);
  reconstruct(*chunk, owner, [cb](bool ok) { cb(ok ? Where::chunk : Where::none); });
}

void ServerNode::fetch_replica(const std::string& idx, const ChunkId& chunk, std::size_t i,
                               std::function<void(Where)> cb) {
  const StripeList& list = config_.list(chunk.stripe_list);
  while (i < list.parity_servers.size() && view_.state(list.parity_servers[i]) != ServerState::normal) ++i;
  if (i >= list.parity_servers.size()) return cb(Where::none);
  Message f;
  f.kind = MessageKind::reconstruct_fetch;
  f.chunk_id = chunk;
  f.key = idx;
  f.seq = await([this, idx, chunk, i, cb](const Message& r) {
    if (r.status == AckStatus::ok && r.record) {
      if (!replica_cache_.count(idx)) replica_cache_[idx] = ReplicaCopy{*r.record};
      cb(Where::replica);
    } else {
      fetch_replica(idx, chunk, i + 1, cb);
    }
  });
  ++stats_.chunk_fetches;
  send(list.parity_servers[i], f);
}

void ServerNode::reconstruct(const ChunkId& id, ServerId owner, std::function<void(bool)> cb) {
  Reconstruction& rc = reconstructions_[id];
  rc.waiters.push_back(std::move(cb));
  if (rc.waiters.size() == 1) start_reconstruction(id, owner);
}

void ServerNode::start_reconstruction(const ChunkId& id, ServerId owner) {
  auto it = reconstructions_.find(id);
  if (it == reconstructions_.end()) return;
  Reconstruction& rc = it->second;
  release_reconstruction_locks(rc);
  rc.received.clear();
  rc.waiting.clear();
  rc.failed = false;
  rc.parity_phase = false;
  rc.token = next_lock_token_++;
  const StripeList& list = config_.list(id.stripe_list);
  int available = 0;
  for (int q = 0; q < list.n(); ++q) {
    if (q != id.position && view_.state(list.server_at(q)) == ServerState::normal) ++available;
  }
  if (available < config_.code.k) {
    ++stats_.unrecoverable;
    auto waiters = std::move(rc.waiters);
    reconstructions_.erase(it);
    for (auto& w : waiters) w(false);
    return;
  }
  // Phase one locks every other data chunk of the stripe (at its server, or
  // at the stand-in holding a rebuilt copy) and reads the live ones once
  // their in-flight deltas are acknowledged. Parities are read afterwards,
  // so they reflect exactly the data that was read.
  const int attempt = rc.attempt;
  std::vector<std::pair<int, Message>> sends;
  std::vector<NodeId> dests;
  for (int q = 0; q < list.k(); ++q) {
    if (q == id.position) continue;
    const ServerId holder = list.data_servers[q];
    Message f;
    f.kind = MessageKind::reconstruct_fetch;
    f.chunk_id = id.with_position(q);
    f.flags = msg_flags::kLock;
    f.origin = id_;
    f.request_id = rc.token;
    NodeId dest = holder;
    const ServerState st = view_.state(holder);
    if (st != ServerState::normal) {
      auto r = view_.redirect(holder, id.stripe_list);
      if (!r || st == ServerState::intermediate) {
        rc.failed = true;
        break;
      }
      dest = *r;
      f.flags |= msg_flags::kDegraded;
      f.target = holder;
    }
    Message rel = f;
    rel.flags = static_cast<std::uint8_t>((f.flags & ~msg_flags::kLock) | msg_flags::kRelease);
    rc.locks.emplace_back(dest, rel);
    rc.waiting.insert(q);
    sends.emplace_back(q, f);
    dests.push_back(dest);
  }
  if (rc.failed) {
    rc.waiting.clear();
    finish_reconstruction(id, owner);
    return;
  }
  for (std::size_t i = 0; i < sends.size(); ++i) {
    auto& [q, f] = sends[i];
    const bool live = !f.has_flag(msg_flags::kDegraded);
    f.seq = await([this, id, owner, q = q, attempt, live](const Message& r) {
      auto it = reconstructions_.find(id);
      if (it == reconstructions_.end() || it->second.attempt != attempt) return;
      Reconstruction& rc = it->second;
      if (rc.parity_phase || !rc.waiting.erase(q)) return;
      if (r.status != AckStatus::ok || (!r.bytes.empty() && r.bytes.size() != config_.chunk_size)) {
        rc.failed = true;
      } else if (live) {
        rc.received[q] = r.bytes.empty() ? ChunkBuffer(config_.chunk_size, 0) : r.bytes;
      }
      if (rc.waiting.empty()) fetch_parities(id, owner);
    });
    ++stats_.chunk_fetches;
    send(dests[i], f);
  }
  if (sends.empty()) fetch_parities(id, owner);
}

void ServerNode::fetch_parities(const ChunkId& id, ServerId owner) {
  Reconstruction& rc = reconstructions_.at(id);
  rc.parity_phase = true;
  if (rc.failed) return finish_reconstruction(id, owner);
  const StripeList& list = config_.list(id.stripe_list);
  const int attempt = rc.attempt;
  std::set<int> targets;
  for (int q = list.k(); q < list.n(); ++q) {
    if (view_.state(list.server_at(q)) == ServerState::normal) targets.insert(q);
  }
  rc.waiting = targets;
  for (int q : targets) {
    Message f;
    f.kind = MessageKind::reconstruct_fetch;
    f.chunk_id = id.with_position(q);
    f.seq = await([this, id, owner, q, attempt](const Message& r) {
      auto it = reconstructions_.find(id);
      if (it == reconstructions_.end() || it->second.attempt != attempt) return;
      Reconstruction& rc = it->second;
      if (!rc.parity_phase || !rc.waiting.erase(q)) return;
      if (r.status != AckStatus::ok || (!r.bytes.empty() && r.bytes.size() != config_.chunk_size)) {
        rc.failed = true;
      } else {
        rc.received[q] = r.bytes.empty() ? ChunkBuffer(config_.chunk_size, 0) : r.bytes;
      }
      if (rc.waiting.empty()) finish_reconstruction(id, owner);
    });
    ++stats_.chunk_fetches;
    send(list.server_at(q), f);
  }
  if (targets.empty()) finish_reconstruction(id, owner);
}

void ServerNode::release_reconstruction_locks(Reconstruction& rc) {
  for (auto& [dest, rel] : rc.locks) send(dest, rel);
  rc.locks.clear();
}

void ServerNode::finish_reconstruction(const ChunkId& id, ServerId owner) {
  auto it = reconstructions_.find(id);
  Reconstruction& rc = it->second;
  release_reconstruction_locks(rc);
  const int k = config_.code.k;
  bool consistent = !rc.failed && static_cast<int>(rc.received.size()) >= k;
  std::vector<ChunkBuffer> data;
  if (consistent) {
    std::map<int, ChunkBuffer> basis;
    for (const auto& [q, buf] : rc.received) {
      if (static_cast<int>(basis.size()) == k) break;
      basis[q] = buf;
    }
    data = codec_.decode(basis);
    // Surplus chunks must agree with the decoded stripe; a mismatch means a
    // concurrent delta landed between fetches.
    std::vector<ChunkBuffer> parity;
    for (const auto& [q, buf] : rc.received) {
      if (basis.count(q)) continue;
      if (q < k) {
        consistent = consistent && data[q] == buf;
      } else {
        if (parity.empty()) parity = codec_.encode(data);
        consistent = consistent && parity[q - k] == buf;
      }
    }
  }
  if (!consistent) {
    if (++rc.attempt <= 20) {
      ++stats_.reconstruction_retries;
      net_.schedule(id_, 2 * kMillis * rc.attempt, [this, id, owner] { start_reconstruction(id, owner); });
      return;
    }
    ++stats_.unrecoverable;
    auto waiters = std::move(rc.waiters);
    reconstructions_.erase(it);
    for (auto& w : waiters) w(false);
    return;
  }
  cache_for(owner).install_chunk(id, data[id.position]);
  ++stats_.reconstructions;
  auto waiters = std::move(rc.waiters);
  reconstructions_.erase(it);
  for (auto& w : waiters) w(true);
}

// ---------------------------------------------------------------- migration

void ServerNode::begin_migration(ServerId target) {
  if (migrations_.count(target)) return;
  migrations_[target] = Migration{};
  if (degraded_pending_ == 0) run_migration(target);
}

void ServerNode::run_migration(ServerId target) {
  Migration& mig = migrations_.at(target);
  mig.started = true;
  auto step = [this, target](Message m) {
    m.seq = await([this, target](const Message&) { migration_step_done(target); });
    ++migrations_.at(target).outstanding;
    ++stats_.migrated;
    return m;
  };

  for (auto it = redirect_buffer_.begin(); it != redirect_buffer_.end();) {
    if (it->second.cause != target) {
      ++it;
      continue;
    }
    int pos = 0;
    const ServerId home = list_of_key(it->second.record.key, &pos).data_servers[pos];
    Message m;
    m.kind = MessageKind::migrate_object;
    m.key = it->second.record.key;
    m.record = it->second.record;
    send(home, step(std::move(m)));
    it = redirect_buffer_.erase(it);
  }
  for (auto it = buffer_deleted_.begin(); it != buffer_deleted_.end();) {
    if (list_of_key(user_key(*it)).contains(target)) it = buffer_deleted_.erase(it);
    else ++it;
  }
  if (auto c = caches_.find(target); c != caches_.end()) {
    for (const ChunkId& cid : dirty_chunks_[target]) {
      auto ref = c->second->find_chunk(cid);
      if (!ref) continue;
      Message m;
      m.kind = MessageKind::migrate_object;
      m.flags = msg_flags::kNoPropagate;
      m.chunk_id = cid;
      m.bytes = c->second->chunk(*ref).content;
      send(target, step(std::move(m)));
    }
    caches_.erase(c);
  }
  dirty_chunks_.erase(target);
  for (auto it = replica_cache_.begin(); it != replica_cache_.end();) {
    int pos = 0;
    const std::string key = user_key(it->first);
    if (list_of_key(key, &pos).data_servers[pos] != target) {
      ++it;
      continue;
    }
    if (it->second.dirty) {
      Message m;
      m.kind = MessageKind::migrate_object;
      m.flags = msg_flags::kNoPropagate;
      m.key = key;
      m.record = it->second.record;
      m.request_kind = static_cast<std::uint8_t>(it->second.deleted ? MessageKind::del : MessageKind::update);
      send(target, step(std::move(m)));
    }
    it = replica_cache_.erase(it);
  }
  if (auto s = stash_.find(target); s != stash_.end()) {
    for (auto& m : s->second) send(target, step(std::move(m)));
    stash_.erase(s);
  }
  if (mig.outstanding == 0) migration_step_done(target);
  else return;
}

void ServerNode::migration_step_done(ServerId target) {
  auto it = migrations_.find(target);
  if (it == migrations_.end()) return;
  if (it->second.outstanding > 0) --it->second.outstanding;
  if (it->second.outstanding > 0) return;
  migrations_.erase(it);
  Message done;
  done.kind = MessageKind::migrate_done;
  done.origin = id_;
  done.target = target;
  send(kCoordinatorId, done);
}

void ServerNode::receive_migration(NodeId from, const Message& m) {
  Message r;
  r.key = m.key;
  if (m.chunk_id && !m.bytes.empty()) {
    try {
      store_.install_chunk(*m.chunk_id, m.bytes);
      for (auto& [off, rec] : parse_chunk_objects(m.bytes)) {
        if (rec.metadata.deleted()) mapping_.erase(rec.key);
        else mapping_[rec.key] = *m.chunk_id;
      }
      mapping_dirty_ = true;
    } catch (const DataModelError&) {
      r.status = AckStatus::failed;
    }
    reply(from, m, r);
    return;
  }
  if (!m.record) {
    r.status = AckStatus::failed;
    reply(from, m, r);
    return;
  }
  if (m.has_flag(msg_flags::kNoPropagate)) {
    // Parities already reflect this change; bring the local copy in line.
    const ObjectRecord& rec = *m.record;
    const std::string idx = rec.index_key();
    auto loc = store_.find(idx);
    try {
      if (m.request_kind == static_cast<std::uint8_t>(MessageKind::del)) {
        if (loc) store_.delete_object(idx);
        mapping_.erase(rec.key);
      } else if (loc && loc->record.value.size() == rec.value.size()) {
        store_.update_value(idx, rec.value);
      } else {
        int pos = 0;
        const StripeList& list = list_of_key(rec.key, &pos);
        if (loc) store_.delete_object(idx);
        auto res = store_.append_object(list.id, static_cast<std::uint8_t>(pos), rec);
        mapping_[rec.key] = res.id;
        after_append(res);
      }
      mapping_dirty_ = true;
    } catch (const DataModelError&) {
      r.status = AckStatus::failed;
    }
    reply(from, m, r);
    return;
  }
  local_upsert(*m.record, [this, from, m](bool ok) {
    Message r;
    r.key = m.key;
    if (!ok) r.status = AckStatus::failed;
    reply(from, m, r);
  });
}

// ------------------------------------------------------------- inspection

const ChunkBuffer* ServerNode::parity_chunk(const ChunkId& id) const {
  auto it = parity_chunks_.find(id);
  return it == parity_chunks_.end() ? nullptr : &it->second;
}

std::vector<ChunkId> ServerNode::parity_chunk_ids() const {
  std::vector<ChunkId> out;
  for (const auto& [id, buf] : parity_chunks_) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t ServerNode::backup_count() const {
  std::size_t n = 0;
  for (const auto& [kid, list] : backups_) n += list.size();
  return n;
}

std::size_t ServerNode::stash_size() const {
  std::size_t n = 0;
  for (const auto& [t, q] : stash_) n += q.size();
  return n;
}

std::size_t ServerNode::cached_chunk_count() const {
  std::size_t n = 0;
  for (const auto& [owner, c] : caches_) n += c->chunk_count();
  return n;
}

const ChunkStore* ServerNode::cache(ServerId owner) const {
  auto it = caches_.find(owner);
  return it == caches_.end() ? nullptr : it->second.get();
}

}  // namespace eckv
