#include "eckv/protocol.hpp"

#include <cstring>

namespace eckv {
namespace {

enum Field : std::uint32_t {
  f_status = 1u << 0,
  f_flags = 1u << 1,
  f_origin = 1u << 2,
  f_key = 1u << 3,
  f_value = 1u << 4,
  f_record = 1u << 5,
  f_chunk_id = 1u << 6,
  f_offset = 1u << 7,
  f_aux_offset = 1u << 8,
  f_bytes = 1u << 9,
  f_keys = 1u << 10,
  f_watermark = 1u << 11,
  f_epoch = 1u << 12,
  f_servers = 1u << 13,
  f_states = 1u << 14,
  f_redirects = 1u << 15,
  f_mappings = 1u << 16,
  f_target = 1u << 17,
  f_records = 1u << 18,
  f_position = 1u << 19,
  f_request_kind = 1u << 20,
  f_request_id = 1u << 21,
  f_all = (1u << 22) - 1,
};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void uint(std::uint64_t v, int bytes) {
    for (int i = bytes - 1; i >= 0; --i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u16(std::uint64_t v) { uint(v, 2); }
  void u32(std::uint64_t v) { uint(v, 4); }
  void u64(std::uint64_t v) { uint(v, 8); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void str16(const std::string& s) {
    if (s.size() > 0xFFFF) throw ProtocolError(ProtocolError::Kind::framing, "string too long");
    u16(s.size());
    raw(s.data(), s.size());
  }
  void str32(const std::string& s) {
    u32(s.size());
    raw(s.data(), s.size());
  }
  void object(const ObjectRecord& r) {
    const auto bytes = r.serialize();
    u32(bytes.size());
    raw(bytes.data(), bytes.size());
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw ProtocolError(ProtocolError::Kind::framing, "truncated payload");
  }
  std::uint64_t uint(int bytes) {
    need(bytes);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(uint(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(uint(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  std::string bytes_as_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string str16() { return bytes_as_string(u16()); }
  std::string str32() { return bytes_as_string(u32()); }
  std::vector<std::uint8_t> blob() {
    const std::size_t n = u32();
    need(n);
    std::vector<std::uint8_t> v(in_.begin() + pos_, in_.begin() + pos_ + n);
    pos_ += n;
    return v;
  }
  ObjectRecord object() {
    const std::size_t n = u32();
    need(n);
    try {
      ParsedObject p = parse_object(in_.subspan(pos_, n));
      if (p.size != n) throw ProtocolError(ProtocolError::Kind::framing, "object length mismatch");
      pos_ += n;
      return std::move(p.record);
    } catch (const DataModelError& e) {
      throw ProtocolError(ProtocolError::Kind::framing, std::string("bad object: ") + e.what());
    }
  }
  /// Element count bounded by the bytes left, so garbage cannot force huge
  /// allocations.
  std::size_t count(std::size_t min_element_size) {
    const std::size_t n = u32();
    if (n > (in_.size() - pos_) / min_element_size) {
      throw ProtocolError(ProtocolError::Kind::framing, "element count exceeds payload");
    }
    return n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t presence(const Message& m) {
  std::uint32_t mask = 0;
  if (m.status != AckStatus::ok) mask |= f_status;
  if (m.flags) mask |= f_flags;
  if (m.origin) mask |= f_origin;
  if (!m.key.empty()) mask |= f_key;
  if (!m.value.empty()) mask |= f_value;
  if (m.record) mask |= f_record;
  if (m.chunk_id) mask |= f_chunk_id;
  if (m.offset) mask |= f_offset;
  if (m.aux_offset) mask |= f_aux_offset;
  if (!m.bytes.empty()) mask |= f_bytes;
  if (!m.keys.empty()) mask |= f_keys;
  if (m.watermark) mask |= f_watermark;
  if (m.epoch) mask |= f_epoch;
  if (!m.servers.empty()) mask |= f_servers;
  if (!m.states.empty()) mask |= f_states;
  if (!m.redirects.empty()) mask |= f_redirects;
  if (!m.mappings.empty()) mask |= f_mappings;
  if (m.target) mask |= f_target;
  if (!m.records.empty()) mask |= f_records;
  if (m.position) mask |= f_position;
  if (m.request_kind) mask |= f_request_kind;
  if (m.request_id) mask |= f_request_id;
  return mask;
}

}  // namespace

const char* kind_name(MessageKind kind) {
  switch (kind) {
    case MessageKind::set: return "SET";
    case MessageKind::set_ack: return "SET_ACK";
    case MessageKind::get: return "GET";
    case MessageKind::get_ack: return "GET_ACK";
    case MessageKind::update: return "UPDATE";
    case MessageKind::update_ack: return "UPDATE_ACK";
    case MessageKind::del: return "DELETE";
    case MessageKind::delete_ack: return "DELETE_ACK";
    case MessageKind::seal: return "SEAL";
    case MessageKind::delta_apply: return "DELTA_APPLY";
    case MessageKind::delta_revert: return "DELTA_REVERT";
    case MessageKind::remove_replica: return "REMOVE_REPLICA";
    case MessageKind::state_announce: return "STATE_ANNOUNCE";
    case MessageKind::state_ack: return "STATE_ACK";
    case MessageKind::state_commit: return "STATE_COMMIT";
    case MessageKind::degraded_route_req: return "DEGRADED_ROUTE_REQ";
    case MessageKind::degraded_route_resp: return "DEGRADED_ROUTE_RESP";
    case MessageKind::reconstruct_fetch: return "RECONSTRUCT_FETCH";
    case MessageKind::reconstruct_chunk: return "RECONSTRUCT_CHUNK";
    case MessageKind::migrate_object: return "MIGRATE_OBJECT";
    case MessageKind::migrate_done: return "MIGRATE_DONE";
    case MessageKind::checkpoint_begin: return "CHECKPOINT_BEGIN";
    case MessageKind::checkpoint_ack: return "CHECKPOINT_ACK";
    case MessageKind::heartbeat: return "HEARTBEAT";
  }
  return "UNKNOWN";
}

std::optional<MessageKind> ack_kind(MessageKind request) {
  switch (request) {
    case MessageKind::set: return MessageKind::set_ack;
    case MessageKind::get: return MessageKind::get_ack;
    case MessageKind::update: return MessageKind::update_ack;
    case MessageKind::del: return MessageKind::delete_ack;
    case MessageKind::state_announce: return MessageKind::state_ack;
    case MessageKind::degraded_route_req: return MessageKind::degraded_route_resp;
    case MessageKind::reconstruct_fetch: return MessageKind::reconstruct_chunk;
    case MessageKind::checkpoint_begin: return MessageKind::checkpoint_ack;
    default: return std::nullopt;
  }
}

std::vector<std::uint8_t> encode_message(const Message& m) {
  Writer w;
  w.u32(0);  // patched below
  w.u8(static_cast<std::uint8_t>(m.kind) | (m.reply ? kReplyBit : 0));
  w.u64(m.seq);
  const std::uint32_t mask = presence(m);
  w.u32(mask);
  if (mask & f_status) w.u8(static_cast<std::uint8_t>(m.status));
  if (mask & f_flags) w.u8(m.flags);
  if (mask & f_origin) w.u32(m.origin);
  if (mask & f_key) w.str16(m.key);
  if (mask & f_value) w.str32(m.value);
  if (mask & f_record) w.object(*m.record);
  if (mask & f_chunk_id) w.u64(m.chunk_id->packed());
  if (mask & f_offset) w.u32(m.offset);
  if (mask & f_aux_offset) w.u32(m.aux_offset);
  if (mask & f_bytes) {
    w.u32(m.bytes.size());
    w.raw(m.bytes.data(), m.bytes.size());
  }
  if (mask & f_keys) {
    w.u32(m.keys.size());
    for (const auto& k : m.keys) w.str16(k);
  }
  if (mask & f_watermark) w.u64(m.watermark);
  if (mask & f_epoch) w.u64(m.epoch);
  if (mask & f_servers) {
    w.u32(m.servers.size());
    for (NodeId s : m.servers) w.u32(s);
  }
  if (mask & f_states) {
    w.u32(m.states.size());
    w.raw(m.states.data(), m.states.size());
  }
  if (mask & f_redirects) {
    w.u32(m.redirects.size());
    for (const auto& r : m.redirects) {
      w.u32(r.failed);
      w.u16(r.stripe_list);
      w.u32(r.redirected);
    }
  }
  if (mask & f_mappings) {
    w.u32(m.mappings.size());
    for (const auto& mp : m.mappings) {
      w.str16(mp.key);
      w.u64(mp.chunk.packed());
    }
  }
  if (mask & f_target) w.u32(m.target);
  if (mask & f_records) {
    w.u32(m.records.size());
    for (const auto& r : m.records) w.object(r);
  }
  if (mask & f_position) w.u8(m.position);
  if (mask & f_request_kind) w.u8(m.request_kind);
  if (mask & f_request_id) w.u64(m.request_id);

  auto& buf = w.buffer();
  const std::size_t total = buf.size() - kFrameLengthSize;
  if (buf.size() > kMaxFrameSize) throw ProtocolError(ProtocolError::Kind::framing, "frame too large");
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<std::uint8_t>(total >> (8 * (3 - i)));
  return std::move(buf);
}

Message decode_message(std::span<const std::uint8_t> frame) {
  if (frame.size() < kFrameHeaderSize) {
    throw ProtocolError(ProtocolError::Kind::framing, "frame shorter than header");
  }
  Reader r(frame);
  const std::uint32_t total = r.u32();
  if (total != frame.size() - kFrameLengthSize) {
    throw ProtocolError(ProtocolError::Kind::framing, "length prefix does not match frame");
  }
  Message m;
  const std::uint8_t kind_byte = r.u8();
  const std::uint8_t kind = kind_byte & ~kReplyBit;
  if (kind == 0 || kind > kMaxMessageKind) {
    throw ProtocolError(ProtocolError::Kind::version, "unknown message kind " + std::to_string(kind));
  }
  m.kind = static_cast<MessageKind>(kind);
  m.reply = kind_byte & kReplyBit;
  m.seq = r.u64();
  const std::uint32_t mask = r.u32();
  if (mask & ~f_all) throw ProtocolError(ProtocolError::Kind::version, "unknown payload fields");

  if (mask & f_status) {
    const std::uint8_t s = r.u8();
    if (s > static_cast<std::uint8_t>(AckStatus::not_found)) {
      throw ProtocolError(ProtocolError::Kind::framing, "bad ack status");
    }
    m.status = static_cast<AckStatus>(s);
  }
  if (mask & f_flags) m.flags = r.u8();
  if (mask & f_origin) m.origin = r.u32();
  if (mask & f_key) m.key = r.str16();
  if (mask & f_value) m.value = r.str32();
  if (mask & f_record) m.record = r.object();
  if (mask & f_chunk_id) m.chunk_id = ChunkId::unpack(r.u64());
  if (mask & f_offset) m.offset = r.u32();
  if (mask & f_aux_offset) m.aux_offset = r.u32();
  if (mask & f_bytes) m.bytes = r.blob();
  if (mask & f_keys) {
    const std::size_t n = r.count(2);
    m.keys.reserve(n);
    for (std::size_t i = 0; i < n; ++i) m.keys.push_back(r.str16());
  }
  if (mask & f_watermark) m.watermark = r.u64();
  if (mask & f_epoch) m.epoch = r.u64();
  if (mask & f_servers) {
    const std::size_t n = r.count(4);
    for (std::size_t i = 0; i < n; ++i) m.servers.push_back(r.u32());
  }
  if (mask & f_states) {
    const std::size_t n = r.count(1);
    for (std::size_t i = 0; i < n; ++i) m.states.push_back(r.u8());
  }
  if (mask & f_redirects) {
    const std::size_t n = r.count(10);
    for (std::size_t i = 0; i < n; ++i) {
      RedirectEntry e;
      e.failed = r.u32();
      e.stripe_list = r.u16();
      e.redirected = r.u32();
      m.redirects.push_back(e);
    }
  }
  if (mask & f_mappings) {
    const std::size_t n = r.count(10);
    for (std::size_t i = 0; i < n; ++i) {
      KeyMapping km;
      km.key = r.str16();
      km.chunk = ChunkId::unpack(r.u64());
      m.mappings.push_back(std::move(km));
    }
  }
  if (mask & f_target) m.target = r.u32();
  if (mask & f_records) {
    const std::size_t n = r.count(4 + kBaseHeaderSize);
    for (std::size_t i = 0; i < n; ++i) m.records.push_back(r.object());
  }
  if (mask & f_position) m.position = r.u8();
  if (mask & f_request_kind) m.request_kind = r.u8();
  if (mask & f_request_id) m.request_id = r.u64();
  if (!r.done()) throw ProtocolError(ProtocolError::Kind::framing, "trailing bytes after payload");
  // Re-encoding must reproduce the frame; rejects non-canonical fields such
  // as explicitly encoded defaults.
  if (presence(m) != mask) {
    throw ProtocolError(ProtocolError::Kind::framing, "payload carries default-valued fields");
  }
  return m;
}

std::optional<std::pair<Message, std::size_t>> try_decode_frame(
    std::span<const std::uint8_t> buffer) {
  if (buffer.size() < kFrameLengthSize) return std::nullopt;
  std::uint32_t total = 0;
  for (int i = 0; i < 4; ++i) total = (total << 8) | buffer[i];
  if (total + kFrameLengthSize > kMaxFrameSize || total < kFrameHeaderSize - kFrameLengthSize) {
    throw ProtocolError(ProtocolError::Kind::framing, "bad frame length");
  }
  if (buffer.size() < total + kFrameLengthSize) return std::nullopt;
  const std::size_t n = total + kFrameLengthSize;
  return std::make_pair(decode_message(buffer.first(n)), n);
}

}  // namespace eckv
