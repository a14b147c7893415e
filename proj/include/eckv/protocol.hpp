#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eckv/chunk.hpp"
#include "eckv/object_record.hpp"

namespace eckv {

using NodeId = std::uint32_t;

enum class MessageKind : std::uint8_t {
  set = 1,
  set_ack,
  get,
  get_ack,
  update,
  update_ack,
  del,
  delete_ack,
  seal,
  delta_apply,
  delta_revert,
  remove_replica,
  state_announce,
  state_ack,
  state_commit,
  degraded_route_req,
  degraded_route_resp,
  reconstruct_fetch,
  reconstruct_chunk,
  migrate_object,
  migrate_done,
  checkpoint_begin,
  checkpoint_ack,
  heartbeat,
};
inline constexpr std::uint8_t kMaxMessageKind = static_cast<std::uint8_t>(MessageKind::heartbeat);

// Kinds without a dedicated acknowledgement are acked by the same kind with
// this bit set in the kind byte.
inline constexpr std::uint8_t kReplyBit = 0x80;

const char* kind_name(MessageKind kind);

enum class AckStatus : std::uint8_t { ok = 0, redirect = 1, failed = 2, not_found = 3 };

namespace msg_flags {
inline constexpr std::uint8_t kDegraded = 0x01;     // routed through the coordinator
inline constexpr std::uint8_t kParityRole = 0x02;   // SET copy destined for a replica buffer
inline constexpr std::uint8_t kLock = 0x04;         // fetch: hold the stripe still until released
inline constexpr std::uint8_t kNoPropagate = 0x08;  // migration: parities already updated
inline constexpr std::uint8_t kStash = 0x10;        // held for a failed server until restore
inline constexpr std::uint8_t kPartial = 0x20;      // STATE_ACK: some reverts unreachable
inline constexpr std::uint8_t kRelease = 0x40;      // fetch: drop a stripe lock, no reply
}  // namespace msg_flags

struct RedirectEntry {
  NodeId failed = 0;
  std::uint16_t stripe_list = 0;
  NodeId redirected = 0;
  friend bool operator==(const RedirectEntry&, const RedirectEntry&) = default;
};

struct KeyMapping {
  std::string key;
  ChunkId chunk;
  friend bool operator==(const KeyMapping&, const KeyMapping&) = default;
};

/// One wire message. Fields left at their default value are omitted from
/// the payload; the presence mask records which ones were written.
struct Message {
  MessageKind kind = MessageKind::heartbeat;
  bool reply = false;  // reply bit in the kind byte
  std::uint64_t seq = 0;

  AckStatus status = AckStatus::ok;
  std::uint8_t flags = 0;
  NodeId origin = 0;
  std::string key;
  std::string value;
  std::optional<ObjectRecord> record;
  std::optional<ChunkId> chunk_id;
  std::uint32_t offset = 0;
  std::uint32_t aux_offset = 0;
  std::vector<std::uint8_t> bytes;
  std::vector<std::string> keys;
  std::uint64_t watermark = 0;
  std::uint64_t epoch = 0;
  std::vector<NodeId> servers;
  std::vector<std::uint8_t> states;
  std::vector<RedirectEntry> redirects;
  std::vector<KeyMapping> mappings;
  NodeId target = 0;
  std::vector<ObjectRecord> records;
  std::uint8_t position = 0;
  std::uint8_t request_kind = 0;
  std::uint64_t request_id = 0;

  bool has_flag(std::uint8_t f) const { return flags & f; }

  friend bool operator==(const Message&, const Message&) = default;
};

/// The dedicated acknowledgement kind for a request kind, if it has one.
std::optional<MessageKind> ack_kind(MessageKind request);

class ProtocolError : public std::runtime_error {
 public:
  enum class Kind { framing, version };
  ProtocolError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// frame = total_length(4, BE) | kind(1) | seq(8, BE) | payload
// total_length counts every byte after the length field.
inline constexpr std::size_t kFrameLengthSize = 4;
inline constexpr std::size_t kFrameHeaderSize = kFrameLengthSize + 1 + 8;
inline constexpr std::size_t kMaxFrameSize = 64u << 20;

std::vector<std::uint8_t> encode_message(const Message& msg);
Message decode_message(std::span<const std::uint8_t> frame);

/// Stream helper: decodes one frame from the front of `buffer` if complete.
/// Returns the message and the number of bytes consumed.
std::optional<std::pair<Message, std::size_t>> try_decode_frame(
    std::span<const std::uint8_t> buffer);

}  // namespace eckv
