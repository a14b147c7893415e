#include "eckv/tcp_transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace eckv {
namespace {

bool write_all(int fd, const std::uint8_t* data, std::size_t size) {
  while (size > 0) {
    const ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data += n;
    size -= static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

std::pair<std::string, std::uint16_t> parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon + 1 == addr.size()) {
    throw TransportError("address must be host:port: " + addr);
  }
  unsigned long port = 0;
  try {
    port = std::stoul(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw TransportError("bad port in " + addr);
  }
  if (port > 65535) throw TransportError("bad port in " + addr);
  return {addr.substr(0, colon), static_cast<std::uint16_t>(port)};
}

TcpTransport::TcpTransport(NodeId self, std::map<NodeId, std::string> addresses)
    : self_(self), addresses_(std::move(addresses)) {}

TcpTransport::~TcpTransport() { stop(); }

void TcpTransport::start(MessageHandler* handler) {
  handler_ = handler;
  running_ = true;
  if (auto it = addresses_.find(self_); it != addresses_.end()) {
    const auto [host, port] = parse_address(it->second);
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw TransportError("socket: " + std::string(std::strerror(errno)));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &sa.sin_addr) != 1) {
      throw TransportError("listen address must be an IPv4 literal: " + host);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0 ||
        ::listen(listen_fd_, 64) < 0) {
      const std::string err = std::strerror(errno);
      ::close(listen_fd_);
      listen_fd_ = -1;
      throw TransportError("bind " + it->second + ": " + err);
    }
    socklen_t len = sizeof sa;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &len);
    bound_port_ = ntohs(sa.sin_port);
    accept_thread_ = std::thread([this] { accept_loop(); });
  }
  loop_thread_ = std::thread([this] { event_loop(); });
}

void TcpTransport::stop() {
  if (!running_.exchange(false)) return;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  {
    std::lock_guard lock(out_mu_);
    for (auto& [id, fd] : outbound_) ::close(fd);
    outbound_.clear();
  }
  {
    std::lock_guard lock(readers_mu_);
    for (int fd : inbound_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  loop_cv_.notify_all();
  if (accept_thread_.joinable()) accept_thread_.join();
  if (loop_thread_.joinable()) loop_thread_.join();
  std::vector<std::thread> readers;
  {
    std::lock_guard lock(readers_mu_);
    readers.swap(readers_);
  }
  for (auto& t : readers) t.join();
}

VirtualTime TcpTransport::now() const {
  return static_cast<VirtualTime>(std::chrono::duration_cast<std::chrono::microseconds>(
                                      std::chrono::steady_clock::now() - epoch_)
                                      .count());
}

int TcpTransport::connect_to(NodeId to) {
  auto it = addresses_.find(to);
  if (it == addresses_.end()) return -1;
  const auto [host, port] = parse_address(it->second);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) return -1;
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) < 0) {
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) return -1;
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  Message hello;
  hello.kind = MessageKind::heartbeat;
  hello.origin = self_;
  const auto frame = encode_message(hello);
  if (!write_all(fd, frame.data(), frame.size())) {
    ::close(fd);
    return -1;
  }
  return fd;
}

bool TcpTransport::send(NodeId from, NodeId to, Message msg) {
  if (!running_) return false;
  if (to == self_) {
    post([this, from, m = std::move(msg)]() mutable { deliver(from, std::move(m)); });
    return true;
  }
  const auto frame = encode_message(msg);
  std::lock_guard lock(out_mu_);
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto it = outbound_.find(to);
    if (it == outbound_.end()) {
      const int fd = connect_to(to);
      if (fd < 0) return false;
      it = outbound_.emplace(to, fd).first;
    }
    if (write_all(it->second, frame.data(), frame.size())) return true;
    // Broken connection: reconnect once.
    ::close(it->second);
    outbound_.erase(it);
  }
  return false;
}

void TcpTransport::schedule(NodeId, VirtualTime delay, std::function<void()> fn, bool) {
  std::lock_guard lock(loop_mu_);
  timers_.push(Timer{now() + delay, timer_seq_++, std::move(fn)});
  loop_cv_.notify_one();
}

void TcpTransport::post(std::function<void()> fn) {
  std::lock_guard lock(loop_mu_);
  tasks_.push_back(std::move(fn));
  loop_cv_.notify_one();
}

void TcpTransport::deliver(NodeId from, Message msg) {
  if (handler_) handler_->on_message(from, std::move(msg));
}

void TcpTransport::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) return;
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return;
    }
    std::lock_guard lock(readers_mu_);
    inbound_fds_.push_back(fd);
    readers_.emplace_back([this, fd] { reader(fd); });
  }
}

void TcpTransport::reader(int fd) {
  std::vector<std::uint8_t> buf;
  std::uint8_t chunk[64 * 1024];
  std::optional<NodeId> peer;
  while (running_) {
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buf.insert(buf.end(), chunk, chunk + n);
    std::size_t used = 0;
    try {
      while (auto got = try_decode_frame(std::span(buf).subspan(used))) {
        used += got->second;
        if (!peer) {
          peer = got->first.origin;
          continue;
        }
        post([this, from = *peer, m = std::move(got->first)]() mutable { deliver(from, std::move(m)); });
      }
    } catch (const ProtocolError&) {
      break;  // a peer speaking garbage loses its connection
    }
    buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(used));
  }
  ::close(fd);
}

void TcpTransport::event_loop() {
  std::unique_lock lock(loop_mu_);
  while (running_) {
    if (!tasks_.empty()) {
      auto fn = std::move(tasks_.front());
      tasks_.pop_front();
      lock.unlock();
      fn();
      lock.lock();
      continue;
    }
    const VirtualTime t = now();
    if (!timers_.empty() && timers_.top().at <= t) {
      auto fn = timers_.top().fn;
      timers_.pop();
      lock.unlock();
      fn();
      lock.lock();
      continue;
    }
    if (timers_.empty()) {
      loop_cv_.wait(lock);
    } else {
      const auto wait = std::chrono::microseconds(timers_.top().at - t);
      loop_cv_.wait_for(lock, wait);
    }
  }
}

}  // namespace eckv
