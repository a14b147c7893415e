#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "eckv/hash.hpp"

namespace eckv {

enum class InsertResult { inserted, replaced, table_full };

/// Fixed-size 4-way set-associative cuckoo hash table. Every entry lives in
/// one of the two buckets chosen by its key's two seeded hashes. Inserts that
/// find both buckets full search breadth-first for a displacement path of at
/// most `kMaxDisplacements` candidate slots; the table is never resized.
template <class Key, class Value>
class CuckooIndex {
 public:
  static constexpr std::size_t kSlotsPerBucket = 4;
  static constexpr std::size_t kMaxDisplacements = 500;

  explicit CuckooIndex(std::size_t bucket_count,
                       std::uint64_t seed_primary = kIndexSeedPrimary,
                       std::uint64_t seed_alternate = kIndexSeedAlternate)
      : buckets_(bucket_count == 0 ? 1 : bucket_count),
        seed_primary_(seed_primary),
        seed_alternate_(seed_alternate) {}

  /// Sized so that `capacity` entries sit at the target occupancy.
  static CuckooIndex for_capacity(std::size_t capacity, double target_load = 0.9) {
    const auto slots = static_cast<std::size_t>(std::ceil(capacity / target_load));
    return CuckooIndex((slots + kSlotsPerBucket - 1) / kSlotsPerBucket);
  }

  InsertResult insert(const Key& key, Value value) {
    const auto [b1, b2] = buckets_for(key);
    for (std::size_t b : {b1, b2}) {
      for (auto& slot : buckets_[b]) {
        if (slot.used && slot.key == key) {
          slot.value = std::move(value);
          return InsertResult::replaced;
        }
      }
    }
    for (std::size_t b : {b1, b2}) {
      if (auto s = free_slot(b)) {
        place(b, *s, key, std::move(value));
        return InsertResult::inserted;
      }
    }
    if (!displace_and_insert(key, std::move(value), b1, b2)) return InsertResult::table_full;
    return InsertResult::inserted;
  }

  const Value* find(const Key& key) const {
    const auto [b1, b2] = buckets_for(key);
    for (std::size_t b : {b1, b2}) {
      for (const auto& slot : buckets_[b]) {
        if (slot.used && slot.key == key) return &slot.value;
      }
    }
    return nullptr;
  }
  Value* find(const Key& key) {
    return const_cast<Value*>(static_cast<const CuckooIndex*>(this)->find(key));
  }
  std::optional<Value> lookup(const Key& key) const {
    if (const Value* v = find(key)) return *v;
    return std::nullopt;
  }

  bool remove(const Key& key) {
    const auto [b1, b2] = buckets_for(key);
    for (std::size_t b : {b1, b2}) {
      for (auto& slot : buckets_[b]) {
        if (slot.used && slot.key == key) {
          slot = Slot{};
          --size_;
          return true;
        }
      }
    }
    return false;
  }

  void clear() {
    for (auto& bucket : buckets_) bucket.fill(Slot{});
    size_ = 0;
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return buckets_.size() * kSlotsPerBucket; }
  std::size_t bucket_count() const { return buckets_.size(); }
  double load_factor() const { return static_cast<double>(size_) / capacity(); }

  template <class Fn>
  void for_each(Fn&& fn) const {
    for (const auto& bucket : buckets_) {
      for (const auto& slot : bucket) {
        if (slot.used) fn(slot.key, slot.value);
      }
    }
  }

  std::pair<std::size_t, std::size_t> buckets_for(const Key& key) const {
    return {hash_key(key, seed_primary_) % buckets_.size(),
            hash_key(key, seed_alternate_) % buckets_.size()};
  }

  /// Every entry sits in one of its two candidate buckets, with no duplicates.
  bool check_invariant() const {
    std::size_t count = 0;
    for (std::size_t b = 0; b < buckets_.size(); ++b) {
      for (const auto& slot : buckets_[b]) {
        if (!slot.used) continue;
        ++count;
        const auto [b1, b2] = buckets_for(slot.key);
        if (b != b1 && b != b2) return false;
        int seen = 0;
        for (std::size_t c : {b1, b2}) {
          for (const auto& other : buckets_[c]) seen += other.used && other.key == slot.key;
          if (b1 == b2) break;
        }
        if (seen != 1) return false;
      }
    }
    return count == size_;
  }

 private:
  struct Slot {
    Key key{};
    Value value{};
    bool used = false;
  };
  using Bucket = std::array<Slot, kSlotsPerBucket>;

  static std::uint64_t hash_key(const Key& key, std::uint64_t seed) {
    if constexpr (std::is_integral_v<Key>) {
      return hash64(static_cast<std::uint64_t>(key), seed);
    } else if constexpr (requires { key.packed(); }) {
      return hash64(key.packed(), seed);
    } else {
      return hash64(std::string_view(key), seed);
    }
  }

  std::optional<std::size_t> free_slot(std::size_t b) const {
    for (std::size_t s = 0; s < kSlotsPerBucket; ++s) {
      if (!buckets_[b][s].used) return s;
    }
    return std::nullopt;
  }

  void place(std::size_t b, std::size_t s, const Key& key, Value value) {
    buckets_[b][s] = Slot{key, std::move(value), true};
    ++size_;
  }

  struct Node {
    std::size_t bucket;
    int parent;             // index into nodes, -1 for roots
    std::size_t from_slot;  // slot in the parent's bucket whose entry moves here
  };

  // A bucket may appear only once per displacement path.
  static bool on_path(const std::vector<Node>& nodes, int idx, std::size_t bucket) {
    for (; idx >= 0; idx = nodes[idx].parent) {
      if (nodes[idx].bucket == bucket) return true;
    }
    return false;
  }

  bool displace_and_insert(const Key& key, Value value, std::size_t b1, std::size_t b2) {
    std::vector<Node> nodes{{b1, -1, 0}};
    if (b2 != b1) nodes.push_back({b2, -1, 0});
    std::size_t head = 0;
    int found = -1;
    std::size_t found_slot = 0;
    while (head < nodes.size() && found < 0) {
      const Node node = nodes[head];
      for (std::size_t s = 0; s < kSlotsPerBucket && found < 0; ++s) {
        const auto [c1, c2] = buckets_for(buckets_[node.bucket][s].key);
        const std::size_t alt = c1 == node.bucket ? c2 : c1;
        if (alt == node.bucket || on_path(nodes, static_cast<int>(head), alt)) continue;
        if (nodes.size() >= kMaxDisplacements) break;
        nodes.push_back({alt, static_cast<int>(head), s});
        if (auto fs = free_slot(alt)) {
          found = static_cast<int>(nodes.size() - 1);
          found_slot = *fs;
        }
      }
      if (nodes.size() >= kMaxDisplacements && found < 0) return false;
      ++head;
    }
    if (found < 0) return false;
    // Shift entries along the path, from the free slot back to a root.
    int cur = found;
    std::size_t hole = found_slot;
    while (nodes[cur].parent >= 0) {
      const Node& n = nodes[cur];
      const std::size_t pb = nodes[n.parent].bucket;
      buckets_[n.bucket][hole] = std::move(buckets_[pb][n.from_slot]);
      buckets_[pb][n.from_slot] = Slot{};
      hole = n.from_slot;
      cur = n.parent;
    }
    place(nodes[cur].bucket, hole, key, std::move(value));
    return true;
  }

  std::vector<Bucket> buckets_;
  std::uint64_t seed_primary_;
  std::uint64_t seed_alternate_;
  std::size_t size_ = 0;
};

}  // namespace eckv
