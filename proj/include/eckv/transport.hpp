#pragma once

#include <cstdint>
#include <functional>

#include "eckv/protocol.hpp"

namespace eckv {

// Microseconds. The simulator advances it explicitly; the TCP transport
// reads a steady clock.
using VirtualTime = std::uint64_t;
inline constexpr VirtualTime kMillis = 1000;
inline constexpr VirtualTime kSeconds = 1000 * kMillis;

class MessageHandler {
 public:
  virtual ~MessageHandler() = default;
  virtual void on_message(NodeId from, Message msg) = 0;
  /// Called when a failed node comes back; memory contents survive.
  virtual void restart() {}
};

/// What nodes see of the network. All callbacks for one node run in that
/// node's single event context.
class Transport {
 public:
  virtual ~Transport() = default;

  /// False if the channel is closed, partitioned, or the peer is unknown.
  virtual bool send(NodeId from, NodeId to, Message msg) = 0;
  virtual VirtualTime now() const = 0;
  /// Background timers (heartbeats, periodic checks) do not keep a
  /// simulation from being considered quiescent.
  virtual void schedule(NodeId owner, VirtualTime delay, std::function<void()> fn,
                        bool background = false) = 0;
};

}  // namespace eckv
