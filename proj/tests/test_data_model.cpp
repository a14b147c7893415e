#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <unordered_map>

#include "eckv/chunk_store.hpp"
#include "eckv/key_chunk_map.hpp"

using namespace eckv;

namespace {

std::string random_string(std::mt19937_64& rng, std::size_t n) {
  std::string s(n, '\0');
  for (auto& c : s) c = static_cast<char>(rng());
  return s;
}

}  // namespace

TEST_CASE("object framing is bit exact") {
  const auto rec = ObjectRecord::make("key", std::string("\x01\x02", 2));
  CHECK(rec.serialize() == std::vector<std::uint8_t>{3, 0, 0, 2, 0, 'k', 'e', 'y', 1, 2});
  CHECK(rec.serialized_size() == 10);
  CHECK(rec.value_offset() == 8);

  const auto frag = ObjectRecord::make_fragment("k", "vv", 0x01020304);
  CHECK(frag.serialize() == std::vector<std::uint8_t>{1, 0, 0, 2, object_flags::kFragment, 1, 2, 3, 4, 'k', 'v', 'v'});
}

TEST_CASE("object parse round trip and corruption") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    const std::size_t ks = 1 + rng() % 255, vs = rng() % 300;
    ObjectRecord rec = (i % 3 == 0) ? ObjectRecord::make_fragment(random_string(rng, ks), random_string(rng, vs),
                                                                  static_cast<std::uint32_t>(rng()))
                                    : ObjectRecord::make(random_string(rng, ks), random_string(rng, vs));
    const auto bytes = rec.serialize();
    const auto parsed = parse_object(bytes);
    REQUIRE(parsed.record == rec);
    REQUIRE(parsed.size == bytes.size());
    CHECK_THROWS_AS(parse_object(std::span(bytes).first(bytes.size() - 1)), DataModelError);
  }
  CHECK_THROWS_AS(ObjectRecord::make("", "v"), DataModelError);
  CHECK_THROWS_AS(ObjectRecord::make(std::string(256, 'k'), "v"), DataModelError);
}

TEST_CASE("chunk objects are contiguous") {
  std::vector<std::uint8_t> content(256, 0);
  std::size_t off = 0;
  std::vector<ObjectRecord> recs{ObjectRecord::make("a", "xyz"), ObjectRecord::make("bb", ""),
                                 ObjectRecord::make("ccc", "12345678")};
  for (const auto& r : recs) {
    r.serialize_into(std::span(content).subspan(off, r.serialized_size()));
    off += r.serialized_size();
  }
  const auto parsed = parse_chunk_objects(content);
  REQUIRE(parsed.size() == 3);
  CHECK(parsed[0].first == 0);
  CHECK(parsed[1].first == recs[0].serialized_size());
  CHECK(parsed[2].first == recs[0].serialized_size() + recs[1].serialized_size());
  for (int i = 0; i < 3; ++i) CHECK(parsed[i].second == recs[i]);
}

TEST_CASE("ChunkId layout") {
  const ChunkId id{0x0102, 0x0304050607, 0x08};
  CHECK(id.serialize() == std::array<std::uint8_t, 8>{1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(ChunkId::deserialize(id.serialize()) == id);
  CHECK(ChunkId::unpack(id.packed()) == id);
  CHECK(ChunkId{0, ChunkId::kUnsealedStripe, 0}.unsealed());
}

TEST_CASE("fragments") {
  const std::size_t C = 4096;
  // 5-byte base header + 4-byte offset + 24-byte key.
  const std::size_t p = C - 9 - 24;
  CHECK(fragment_payload_size(24, C) == p);

  const std::string key(24, 'k');
  SUBCASE("exactly one payload") {
    const auto frags = fragment_object(key, std::string(p, 'x'), C);
    REQUIRE(frags.size() == 1);
    CHECK(frags[0].metadata.fragment_offset == 0);
    CHECK(frags[0].serialized_size() == C);
  }
  SUBCASE("10000 bytes") {
    std::mt19937_64 rng(2);
    const std::string value = random_string(rng, 10000);
    auto frags = fragment_object(key, value, C);
    REQUIRE(frags.size() == 3);
    CHECK(frags[0].metadata.fragment_offset == 0);
    CHECK(frags[1].metadata.fragment_offset == p);
    CHECK(frags[2].metadata.fragment_offset == 2 * p);
    CHECK(frags[2].value.size() == 10000 - 2 * p);
    for (const auto& f : frags) CHECK(f.serialized_size() <= C);
    std::shuffle(frags.begin(), frags.end(), rng);
    CHECK(reassemble_fragments(frags) == value);
    CHECK(frags[0].index_key() != frags[1].index_key());
    CHECK(frags[0].index_key() != whole_index_key(key));
  }
}

TEST_CASE("cuckoo index basics") {
  CuckooIndex<std::string, int> idx(16);
  CHECK(!idx.lookup("a"));
  CHECK(idx.insert("a", 1) == InsertResult::inserted);
  CHECK(idx.lookup("a") == 1);
  CHECK(idx.insert("a", 2) == InsertResult::replaced);
  CHECK(idx.lookup("a") == 2);
  CHECK(idx.remove("a"));
  CHECK(!idx.lookup("a"));
  CHECK(!idx.remove("a"));
  CHECK(idx.size() == 0);
}

TEST_CASE("cuckoo index displaces into the alternate bucket") {
  CuckooIndex<std::uint64_t, int> idx(64);
  // Five keys sharing a primary bucket.
  std::vector<std::uint64_t> keys;
  const auto target = idx.buckets_for(0).first;
  for (std::uint64_t k = 0; keys.size() < 5; ++k) {
    const auto [b1, b2] = idx.buckets_for(k);
    if (b1 == target && b2 != target) keys.push_back(k);
  }
  for (auto k : keys) CHECK(idx.insert(k, static_cast<int>(k)) == InsertResult::inserted);
  for (auto k : keys) CHECK(idx.lookup(k) == static_cast<int>(k));
  CHECK(idx.check_invariant());
}

TEST_CASE("cuckoo index reaches 90% load before the first failure") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CuckooIndex<std::uint64_t, int> idx(4096);
    std::mt19937_64 rng(seed);
    while (idx.insert(rng(), 0) != InsertResult::table_full) {
    }
    CHECK(idx.load_factor() >= 0.90);
    CHECK(idx.check_invariant());
  }
}

TEST_CASE("cuckoo index agrees with a shadow map over 1e5 operations") {
  CuckooIndex<std::string, std::uint32_t> idx(2048);
  std::unordered_map<std::string, std::uint32_t> shadow;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100000; ++i) {
    const std::string key = "k" + std::to_string(rng() % 6000);
    switch (rng() % 3) {
      case 0: {
        const auto v = static_cast<std::uint32_t>(rng());
        const auto r = idx.insert(key, v);
        if (r == InsertResult::table_full) {
          REQUIRE(!shadow.count(key));
          break;
        }
        REQUIRE((r == InsertResult::replaced) == (shadow.count(key) > 0));
        shadow[key] = v;
        break;
      }
      case 1: {
        auto it = shadow.find(key);
        const auto got = idx.lookup(key);
        REQUIRE(got.has_value() == (it != shadow.end()));
        if (got) REQUIRE(*got == it->second);
        break;
      }
      default:
        REQUIRE(idx.remove(key) == (shadow.erase(key) > 0));
    }
  }
  CHECK(idx.size() == shadow.size());
  CHECK(idx.check_invariant());
}

TEST_CASE("append: first object goes to offset 0") {
  ChunkStore store({256, 16, 2, 64});
  const auto r = store.append_object(3, 1, ObjectRecord::make("a", "b"));
  CHECK(r.offset == 0);
  CHECK(r.id.unsealed());
  CHECK(r.id.stripe_list == 3);
  CHECK(r.id.position == 1);
  CHECK(r.seals.empty());
}

TEST_CASE("append: best fit among unsealed chunks") {
  // 200-byte chunks, two unsealed per list.
  ChunkStore store({200, 16, 2, 64});
  store.append_object(0, 0, ObjectRecord::make("a", std::string(94, 'a')));   // 100 bytes, 100 free
  const auto b = store.append_object(0, 0, ObjectRecord::make("b", std::string(144, 'b')));  // 50 free
  const auto c = store.append_object(0, 0, ObjectRecord::make("c", std::string(34, 'c')));   // 40 bytes
  CHECK(c.chunk == b.chunk);
  CHECK(c.seals.empty());
}

TEST_CASE("append: seals the fullest chunk when nothing fits") {
  ChunkStore store({100, 16, 2, 64});
  store.append_object(0, 0, ObjectRecord::make("a", std::string(64, 'a')));  // 30 free
  const auto b = store.append_object(0, 0, ObjectRecord::make("b", std::string(74, 'b')));  // 20 free
  const auto c = store.append_object(0, 0, ObjectRecord::make("c", std::string(34, 'c')));
  REQUIRE(c.seals.size() == 1);
  CHECK(c.seals[0].chunk == b.chunk);
  CHECK(c.chunk != b.chunk);
  CHECK(c.offset == 0);
  CHECK(store.chunk(b.chunk).sealed);
  CHECK(store.unsealed_count(0) == 2);
}

TEST_CASE("seal: key order and stripe counter") {
  ChunkStore store({256, 16, 4, 64});
  for (const char* k : {"a", "b", "c"}) store.append_object(5, 0, ObjectRecord::make(k, "v"));
  const auto r = store.append_object(5, 0, ObjectRecord::make("a2", "v"));
  auto ev = store.seal_chunk(r.chunk);
  CHECK(ev.keys == std::vector<std::string>{whole_index_key("a"), whole_index_key("b"), whole_index_key("c"),
                                            whole_index_key("a2")});
  CHECK(ev.id.stripe == 0);
  CHECK_THROWS_AS(store.seal_chunk(r.chunk), DataModelError);

  const auto r2 = store.append_object(5, 0, ObjectRecord::make("d", "v"));
  CHECK(r2.chunk != r.chunk);  // sealed chunks take no more objects
  CHECK(store.seal_chunk(r2.chunk).id.stripe == 1);
  CHECK(store.stripe_counter(5) == 2);
  CHECK(store.find_chunk(ev.id) == r.chunk);
}

TEST_CASE("update and delete deltas") {
  ChunkStore store({256, 16, 4, 64});
  const auto r = store.append_object(0, 0, ObjectRecord::make("key", "aaaa"));
  store.seal_chunk(r.chunk);
  const ChunkBuffer before = store.chunk(r.chunk).content;

  auto m = store.update_value(whole_index_key("key"), "abca");
  CHECK(m.sealed);
  CHECK(m.after.value == "abca");
  ChunkBuffer rebuilt = before;
  xor_delta_into(rebuilt, m.delta);
  CHECK(rebuilt == store.chunk(r.chunk).content);
  CHECK_THROWS_AS(store.update_value(whole_index_key("key"), "toolong"), DataModelError);

  const ChunkBuffer before_delete = store.chunk(r.chunk).content;
  auto d = store.delete_object(whole_index_key("key"));
  ChunkBuffer after = before_delete;
  xor_delta_into(after, d.delta);
  CHECK(after == store.chunk(r.chunk).content);
  CHECK(d.after.metadata.deleted());
  CHECK(!store.find(whole_index_key("key")));
}

TEST_CASE("delete in an unsealed chunk compacts it") {
  ChunkStore store({256, 16, 4, 64});
  store.append_object(0, 0, ObjectRecord::make("a", "1"));
  store.append_object(0, 0, ObjectRecord::make("b", "22"));
  store.append_object(0, 0, ObjectRecord::make("c", "333"));
  store.delete_object(whole_index_key("b"));
  CHECK(!store.find(whole_index_key("b")));
  CHECK(store.find(whole_index_key("c"))->record.value == "333");
  CHECK(store.find(whole_index_key("c"))->ref.offset == ObjectRecord::make("a", "1").serialized_size());
}

TEST_CASE("rebuild_indexes") {
  SUBCASE("empty") {
    auto r = rebuild_indexes({}, 16, 16);
    CHECK(r.objects.size() == 0);
    CHECK(r.chunks.size() == 0);
  }
  SUBCASE("1000 objects snapshot") {
    ChunkStore store({512, 1024, 4, 4096});
    std::mt19937_64 rng(4);
    for (int i = 0; i < 1000; ++i) {
      store.append_object(static_cast<std::uint16_t>(i % 3), 0,
                          ObjectRecord::make("key" + std::to_string(i), random_string(rng, 8 + rng() % 24)));
    }
    store.seal_all();
    store.delete_object(whole_index_key("key7"));
    const auto objects = store.object_map();
    const auto chunks = store.chunk_map();
    auto r = rebuild_indexes(store.chunks(), 4096, 1024);
    std::map<std::string, ObjectRef> o;
    r.objects.for_each([&](const std::string& k, const ObjectRef& v) { o[k] = v; });
    std::map<ChunkId, ChunkRef> c;
    r.chunks.for_each([&](const ChunkId& k, ChunkRef v) { c[k] = v; });
    CHECK(o == objects);
    CHECK(c == chunks);
    CHECK(!o.count(whole_index_key("key7")));
  }
  SUBCASE("tombstone only") {
    ChunkStore store({256, 16, 4, 64});
    store.append_object(0, 0, ObjectRecord::make("x", "y"));
    const auto ev = store.seal_all();
    store.delete_object(whole_index_key("x"));
    auto r = rebuild_indexes(store.chunks(), 16, 16);
    CHECK(r.objects.size() == 0);
    CHECK(r.chunks.lookup(ev.at(0).id).has_value());
  }
}

TEST_CASE("install_chunk re-derives the object index") {
  ChunkStore a({256, 16, 4, 64});
  a.append_object(2, 1, ObjectRecord::make("p", "q"));
  a.append_object(2, 1, ObjectRecord::make("r", "s"));
  const auto ev = a.seal_all().at(0);
  ChunkStore b({256, 16, 4, 64});
  b.install_chunk(ev.id, a.chunk(ev.chunk).content);
  CHECK(b.find(whole_index_key("r"))->record.value == "s");
  CHECK(b.find_chunk(ev.id).has_value());
}

TEST_CASE("checkpoint encoding") {
  KeyChunkMapping m{{"alpha", ChunkId{1, 2, 3}}, {"beta", ChunkId{4, ChunkId::kUnsealedStripe, 0}}};
  const auto bytes = encode_checkpoint(m);
  // 1 + 5 + 8, 1 + 4 + 8, trailer 8.
  CHECK(bytes.size() == 14 + 13 + 8);
  CHECK(decode_checkpoint(bytes) == m);
  CHECK_THROWS_AS(decode_checkpoint(std::span(bytes).first(bytes.size() - 3)), DataModelError);
  CHECK(decode_checkpoint(encode_checkpoint({})).empty());
}

TEST_CASE("file checkpoint store") {
  const auto dir = std::filesystem::temp_directory_path() / "eckv_ckpt_test";
  std::filesystem::remove_all(dir);
  FileCheckpointStore store(dir);
  CHECK(!store.load(3));
  store.save(3, {{"k", ChunkId{0, 1, 2}}});
  store.save(3, {{"k", ChunkId{0, 1, 2}}, {"j", ChunkId{0, 5, 1}}});
  CHECK(store.load(3)->size() == 2);
  FileCheckpointStore again(dir);
  CHECK(again.load(3)->at("j") == ChunkId{0, 5, 1});
  std::filesystem::remove_all(dir);
}
