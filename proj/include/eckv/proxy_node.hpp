#pragma once

#include <deque>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "eckv/cluster_config.hpp"
#include "eckv/transport.hpp"

namespace eckv {

struct ClientResult {
  AckStatus status = AckStatus::ok;
  std::string value;  // GET only
  bool ok() const { return status == AckStatus::ok; }
};
using ClientCallback = std::function<void(const ClientResult&)>;

struct ProxyStats {
  std::uint64_t issued = 0;
  std::uint64_t completed = 0;
  std::uint64_t failed = 0;
  std::uint64_t degraded = 0;        // attempts routed through the coordinator
  std::uint64_t route_requests = 0;
  std::uint64_t get_retries = 0;
  std::uint64_t mutation_retries = 0;
  std::uint64_t timed_out = 0;        // mutations surfaced as failed after a timeout
  std::uint64_t reverts = 0;
  std::uint64_t replays = 0;
  std::uint64_t parked = 0;
};

class ProxyNode : public MessageHandler {
 public:
  ProxyNode(NodeId id, const ClusterConfig& config, Transport& net);

  NodeId id() const { return id_; }

  void set(const std::string& key, const std::string& value, ClientCallback cb);
  void get(const std::string& key, ClientCallback cb);
  void update(const std::string& key, const std::string& value, ClientCallback cb);
  void del(const std::string& key, ClientCallback cb);

  void on_message(NodeId from, Message msg) override;
  void restart() override {}

  const StateView& view() const { return view_; }
  const ProxyStats& stats() const { return stats_; }
  /// Requests issued but not yet answered to the client.
  std::size_t pending() const { return requests_.size(); }
  std::size_t mapping_backup_size() const;
  /// Highest mutation sequence number below which every mutation is done.
  std::uint64_t watermark() const;

 private:
  struct Request {
    MessageKind kind = MessageKind::get;
    std::string key;
    std::string value;
    ClientCallback cb;
    std::uint64_t request_id = 0;  // current attempt, mutations only
    std::uint16_t list = 0;
    ServerId data_server = 0;
    bool degraded = false;
    bool parked = false;
    NodeId dest = 0;                 // server answering for the request
    std::set<NodeId> awaiting;
    std::vector<std::uint64_t> msgs;
    std::vector<ServerId> stash_after_commit;  // parities that missed a SET copy
    AckStatus status = AckStatus::ok;
    std::string result;
    std::optional<ChunkId> chunk;
    int get_retries = 0;
    int mutation_retries = 0;
    int sends_ok = 0;  // messages of this attempt the transport accepted
    std::uint64_t attempt = 0;
  };
  struct PostCommitRevert {
    ServerId parity;
    std::uint16_t list;
    std::uint64_t request_id;
  };

  void submit(MessageKind kind, const std::string& key, const std::string& value, ClientCallback cb);
  void start_next(const std::string& key);
  void dispatch(std::uint64_t rid);
  void send_to(Request& r, std::uint64_t rid, NodeId to, Message m);
  void cancel(Request& r);
  void park(std::uint64_t rid);
  void on_reply(NodeId from, const Message& m);
  void on_route(std::uint64_t rid, const Message& m);
  void complete(std::uint64_t rid);
  void arm_get_timeout(std::uint64_t rid);
  void arm_mutation_timeout(std::uint64_t rid);
  bool involves(const Request& r, const std::set<ServerId>& servers) const;
  std::vector<ServerId> involved(const Request& r) const;

  void on_announce(const Message& m);
  void on_commit(const Message& m);
  void try_finish_phase1();
  void release_parked();

  NodeId id_;
  const ClusterConfig& config_;
  Transport& net_;
  StateView view_;
  ProxyStats stats_;

  std::uint64_t next_rid_ = 1;
  std::uint64_t next_msg_ = 1;
  std::uint64_t next_request_id_ = 1;
  std::map<std::uint64_t, Request> requests_;
  std::unordered_map<std::string, std::deque<std::uint64_t>> key_queues_;
  std::unordered_map<std::uint64_t, std::pair<std::uint64_t, NodeId>> msg_map_;
  std::set<std::uint64_t> incomplete_;  // mutation sequence numbers in flight
  std::vector<std::uint64_t> parked_;
  std::map<ServerId, std::map<std::string, ChunkId>> mapping_backup_;

  bool phase1_ = false;
  bool deadline_passed_ = false;
  bool revert_deadline_passed_ = false;
  bool partial_ = false;
  std::set<ServerId> announced_;
  std::uint64_t announce_epoch_ = 0;
  std::set<std::uint64_t> revert_msgs_;
  std::vector<PostCommitRevert> post_commit_reverts_;
  std::vector<std::pair<ServerId, Message>> post_commit_stash_;
};

}  // namespace eckv
