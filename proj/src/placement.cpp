#include "eckv/placement.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "eckv/hash.hpp"

namespace eckv {

int StripeList::position_of(ServerId server) const {
  for (int i = 0; i < n(); ++i) {
    if (server_at(i) == server) return i;
  }
  return -1;
}

std::vector<ServerId> StripeList::members() const {
  std::vector<ServerId> out = data_servers;
  out.insert(out.end(), parity_servers.begin(), parity_servers.end());
  return out;
}

std::vector<StripeList> generate_stripe_lists(std::span<const ServerId> servers, int n, int k,
                                              int c) {
  if (k <= 0 || k >= n) throw PlacementError("stripe lists need 0 < k < n");
  if (static_cast<int>(servers.size()) < n) {
    throw PlacementError("need at least n = " + std::to_string(n) + " servers, have " +
                         std::to_string(servers.size()));
  }
  if (c < 1 || c > 65536) throw PlacementError("stripe list count must be in [1, 65536]");

  std::map<ServerId, std::uint64_t> load;
  for (ServerId s : servers) load[s] = 0;
  if (static_cast<int>(load.size()) != static_cast<int>(servers.size())) {
    throw PlacementError("duplicate server IDs");
  }

  std::vector<StripeList> lists;
  lists.reserve(c);
  for (int i = 0; i < c; ++i) {
    std::vector<ServerId> order(servers.begin(), servers.end());
    std::sort(order.begin(), order.end(), [&](ServerId a, ServerId b) {
      return load[a] != load[b] ? load[a] < load[b] : a < b;
    });
    StripeList list;
    list.id = static_cast<std::uint16_t>(i);
    list.parity_servers.assign(order.begin(), order.begin() + (n - k));
    list.data_servers.assign(order.begin() + (n - k), order.begin() + n);
    for (ServerId s : list.parity_servers) load[s] += k;
    for (ServerId s : list.data_servers) load[s] += 1;
    lists.push_back(std::move(list));
  }
  return lists;
}

KeyPlacement map_key(std::string_view key, std::span<const StripeList> lists) {
  const auto& list = lists[hash64(key, kStripeListSeed) % lists.size()];
  const int pos = static_cast<int>(hash64(key, kDataServerSeed) % list.data_servers.size());
  return KeyPlacement{list.id, pos, list.data_servers[pos]};
}

std::string format_stripe_list(const StripeList& list) {
  std::ostringstream os;
  os << "id " << list.id << " data";
  for (ServerId s : list.data_servers) os << ' ' << s;
  os << " parity";
  for (ServerId s : list.parity_servers) os << ' ' << s;
  return os.str();
}

StripeList parse_stripe_list(std::string_view line) {
  std::istringstream is{std::string(line)};
  std::string word;
  StripeList list;
  if (!(is >> word) || word != "id") throw PlacementError("stripe list line must start with 'id'");
  unsigned id = 0;
  if (!(is >> id) || id > 0xFFFF) throw PlacementError("bad stripe list id");
  list.id = static_cast<std::uint16_t>(id);
  std::vector<ServerId>* target = nullptr;
  while (is >> word) {
    if (word == "data") {
      target = &list.data_servers;
    } else if (word == "parity") {
      target = &list.parity_servers;
    } else if (target) {
      target->push_back(static_cast<ServerId>(std::stoul(word)));
    } else {
      throw PlacementError("unexpected token '" + word + "'");
    }
  }
  if (list.data_servers.empty() || list.parity_servers.empty()) {
    throw PlacementError("stripe list needs data and parity servers");
  }
  auto members = list.members();
  std::sort(members.begin(), members.end());
  if (std::adjacent_find(members.begin(), members.end()) != members.end()) {
    throw PlacementError("stripe list servers must be distinct");
  }
  return list;
}

}  // namespace eckv
