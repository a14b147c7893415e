#include "eckv/linearizability.hpp"

#include <algorithm>
#include <unordered_set>

namespace eckv {
namespace {

using State = std::optional<std::string>;

/// Applies op to state; false if the recorded outcome is impossible there.
bool step(const HistoryOp& op, const State& s, State& out) {
  out = s;
  if (op.unknown) {
    // Only the effect matters; any outcome is acceptable.
    switch (op.kind) {
      case OpType::set:
        if (!s) out = op.input;
        return true;
      case OpType::update:
        if (s) out = op.input;
        return true;
      case OpType::del:
        out.reset();
        return true;
      default:
        return true;
    }
  }
  switch (op.kind) {
    case OpType::get:
      if (op.status == AckStatus::ok) return s && *s == op.output;
      if (op.status == AckStatus::not_found) return !s;
      return true;
    case OpType::set:
      if (op.status == AckStatus::ok) {
        if (s) return false;
        out = op.input;
        return true;
      }
      return s.has_value();  // rejected because the key exists
    case OpType::update:
      if (op.status == AckStatus::ok) {
        if (!s) return false;
        out = op.input;
        return true;
      }
      return !s;
    case OpType::del:
      if (op.status == AckStatus::ok) {
        if (!s) return false;
        out.reset();
        return true;
      }
      return !s;
    case OpType::rmw:
      return false;
  }
  return false;
}

struct Entry {
  bool is_call = true;
  std::size_t op = 0;
  VirtualTime time = 0;
  Entry* match = nullptr;  // call -> its return
  Entry* prev = nullptr;
  Entry* next = nullptr;
};

void lift(Entry* call) {
  call->prev->next = call->next;
  if (call->next) call->next->prev = call->prev;
  if (Entry* r = call->match) {
    r->prev->next = r->next;
    if (r->next) r->next->prev = r->prev;
  }
}

void unlift(Entry* call) {
  if (Entry* r = call->match) {
    r->prev->next = r;
    if (r->next) r->next->prev = r;
  }
  call->prev->next = call;
  if (call->next) call->next->prev = call;
}

std::string cache_key(const std::vector<std::uint64_t>& bits, const State& s) {
  std::string k(reinterpret_cast<const char*>(bits.data()), bits.size() * sizeof(std::uint64_t));
  if (s) {
    k.push_back('\1');
    k += *s;
  } else {
    k.push_back('\0');
  }
  return k;
}

}  // namespace

bool check_key_history(const std::vector<HistoryOp>& ops, const State& initial) {
  // Failed GETs carry no information, so they are left out entirely.
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].kind == OpType::get && ops[i].status == AckStatus::failed && !ops[i].unknown) continue;
    if (ops[i].kind == OpType::get && ops[i].unknown) continue;
    idx.push_back(i);
  }
  std::vector<Entry> entries;
  entries.reserve(idx.size() * 2 + 1);
  entries.push_back(Entry{});  // head sentinel
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const HistoryOp& op = ops[idx[j]];
    entries.push_back(Entry{true, j, op.call});
    if (!op.unknown) entries.push_back(Entry{false, j, op.ret});
  }
  // Calls sort before returns at equal times, which treats touching
  // operations as concurrent.
  std::sort(entries.begin() + 1, entries.end(), [](const Entry& a, const Entry& b) {
    if (a.time != b.time) return a.time < b.time;
    if (a.is_call != b.is_call) return a.is_call;
    return a.op < b.op;
  });
  std::vector<Entry*> call_of(idx.size(), nullptr);
  for (std::size_t e = 1; e < entries.size(); ++e) {
    if (entries[e].is_call) call_of[entries[e].op] = &entries[e];
  }
  std::size_t remaining_returns = 0;
  for (std::size_t e = 1; e < entries.size(); ++e) {
    if (!entries[e].is_call) {
      call_of[entries[e].op]->match = &entries[e];
      ++remaining_returns;
    }
  }
  for (std::size_t e = 0; e < entries.size(); ++e) {
    entries[e].prev = e ? &entries[e - 1] : nullptr;
    entries[e].next = e + 1 < entries.size() ? &entries[e + 1] : nullptr;
  }

  Entry* head = &entries[0];
  std::vector<std::uint64_t> linearized((idx.size() + 63) / 64, 0);
  std::unordered_set<std::string> cache;
  std::vector<std::pair<Entry*, State>> stack;
  State state = initial;
  Entry* entry = head->next;
  while (remaining_returns > 0) {
    if (entry == nullptr) return false;
    if (entry->is_call) {
      State next;
      const HistoryOp& op = ops[idx[entry->op]];
      bool advanced = false;
      if (step(op, state, next)) {
        linearized[entry->op / 64] |= 1ull << (entry->op % 64);
        if (cache.insert(cache_key(linearized, next)).second) {
          stack.emplace_back(entry, state);
          state = std::move(next);
          lift(entry);
          if (entry->match) --remaining_returns;
          entry = head->next;
          advanced = true;
        } else {
          linearized[entry->op / 64] &= ~(1ull << (entry->op % 64));
        }
      }
      if (!advanced) entry = entry->next;
    } else {
      if (stack.empty()) return false;
      auto [call, prior] = std::move(stack.back());
      stack.pop_back();
      state = std::move(prior);
      linearized[call->op / 64] &= ~(1ull << (call->op % 64));
      unlift(call);
      if (call->match) ++remaining_returns;
      entry = call->next;
    }
  }
  return true;
}

LinearizabilityResult check_history(const std::vector<HistoryOp>& ops,
                                    const std::map<std::string, std::string>& initial) {
  std::map<std::string, std::vector<HistoryOp>> by_key;
  for (const auto& op : ops) by_key[op.key].push_back(op);
  LinearizabilityResult r;
  r.ops = ops.size();
  r.keys = by_key.size();
  for (const auto& [key, list] : by_key) {
    State init;
    if (auto it = initial.find(key); it != initial.end()) init = it->second;
    if (!check_key_history(list, init)) {
      r.ok = false;
      r.violating_keys.push_back(key);
    }
  }
  return r;
}

}  // namespace eckv
