#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <queue>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "eckv/transport.hpp"

namespace eckv {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "host:port" -> (host, port). Throws TransportError.
std::pair<std::string, std::uint16_t> parse_address(const std::string& addr);

/// Length-prefixed frames over persistent TCP connections, one outgoing
/// connection per peer. The first frame on a connection names the sender.
/// Handler callbacks and timers run on a single event-loop thread.
class TcpTransport : public Transport {
 public:
  TcpTransport(NodeId self, std::map<NodeId, std::string> addresses);
  ~TcpTransport() override;
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  /// Binds the listening socket (if this node has an address) and starts
  /// the event loop.
  void start(MessageHandler* handler);
  void stop();

  bool send(NodeId from, NodeId to, Message msg) override;
  VirtualTime now() const override;
  void schedule(NodeId owner, VirtualTime delay, std::function<void()> fn,
                bool background = false) override;

  /// Runs `fn` on the event-loop thread.
  void post(std::function<void()> fn);
  /// Port actually bound (useful when the address asked for port 0).
  std::uint16_t bound_port() const { return bound_port_; }

 private:
  struct Timer {
    VirtualTime at;
    std::uint64_t seq;
    std::function<void()> fn;
    bool operator>(const Timer& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };

  int connect_to(NodeId to);
  void accept_loop();
  void reader(int fd);
  void event_loop();
  void deliver(NodeId from, Message msg);

  NodeId self_;
  std::map<NodeId, std::string> addresses_;
  MessageHandler* handler_ = nullptr;
  std::chrono::steady_clock::time_point epoch_ = std::chrono::steady_clock::now();

  int listen_fd_ = -1;
  std::uint16_t bound_port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::thread loop_thread_;
  std::mutex readers_mu_;
  std::vector<std::thread> readers_;
  std::vector<int> inbound_fds_;

  std::mutex out_mu_;
  std::map<NodeId, int> outbound_;

  std::mutex loop_mu_;
  std::condition_variable loop_cv_;
  std::deque<std::function<void()>> tasks_;
  std::priority_queue<Timer, std::vector<Timer>, std::greater<>> timers_;
  std::uint64_t timer_seq_ = 0;
};

}  // namespace eckv
