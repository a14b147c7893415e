#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eckv/protocol.hpp"
#include "eckv/transport.hpp"
#include "eckv/workload.hpp"

namespace eckv {

/// One completed (or abandoned) client operation on a single key.
struct HistoryOp {
  OpType kind = OpType::get;  // set, get, update, del
  std::string key;
  std::string input;          // SET / UPDATE value
  VirtualTime call = 0;
  VirtualTime ret = 0;
  AckStatus status = AckStatus::ok;
  std::string output;         // GET value when ok
  /// Outcome unknown (e.g. surfaced as a failure): it may or may not have
  /// taken effect, at any point after its call.
  bool unknown = false;
};

struct LinearizabilityResult {
  bool ok = true;
  std::size_t keys = 0;
  std::size_t ops = 0;
  std::vector<std::string> violating_keys;
};

/// Checks a single-key history against a register with insert/update/delete
/// semantics, starting from `initial` (absent if nullopt). Wing-Gong search
/// with Lowe's memoization of (linearized set, state).
bool check_key_history(const std::vector<HistoryOp>& ops, const std::optional<std::string>& initial);

/// Splits by key and checks each key independently.
LinearizabilityResult check_history(const std::vector<HistoryOp>& ops,
                                    const std::map<std::string, std::string>& initial = {});

}  // namespace eckv
