#include "eckv/cluster_config.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace eckv {

const char* state_name(ServerState s) {
  switch (s) {
    case ServerState::normal: return "normal";
    case ServerState::intermediate: return "intermediate";
    case ServerState::degraded: return "degraded";
    case ServerState::coordinated_normal: return "coordinated_normal";
  }
  return "?";
}

ServerState next_state(ServerState s) {
  switch (s) {
    case ServerState::normal: return ServerState::intermediate;
    case ServerState::intermediate: return ServerState::degraded;
    case ServerState::degraded: return ServerState::coordinated_normal;
    case ServerState::coordinated_normal: return ServerState::normal;
  }
  return ServerState::normal;
}

bool StateView::all_normal(const StripeList& list) const {
  for (ServerId s : list.members()) {
    if (state(s) != ServerState::normal) return false;
  }
  return true;
}

std::optional<ServerId> StateView::redirect(ServerId failed, std::uint16_t list) const {
  auto it = redirects.find({failed, list});
  if (it == redirects.end()) return std::nullopt;
  return it->second;
}

bool StateView::apply(const Message& m) {
  if (m.epoch < epoch || m.servers.size() != m.states.size()) return false;
  epoch = m.epoch;
  states.clear();
  for (std::size_t i = 0; i < m.servers.size(); ++i) {
    const auto st = static_cast<ServerState>(m.states[i]);
    if (st != ServerState::normal) states[m.servers[i]] = st;
  }
  redirects.clear();
  for (const auto& r : m.redirects) redirects[{r.failed, r.stripe_list}] = r.redirected;
  return true;
}

void StateView::fill(Message& m) const {
  m.epoch = epoch;
  m.servers.clear();
  m.states.clear();
  for (const auto& [s, st] : states) {
    m.servers.push_back(s);
    m.states.push_back(static_cast<std::uint8_t>(st));
  }
  m.redirects.clear();
  for (const auto& [key, r] : redirects) m.redirects.push_back(RedirectEntry{key.first, key.second, r});
}

ClusterConfig ClusterConfig::make(int servers, int proxies, int n, int k, int stripe_lists) {
  ClusterConfig c;
  c.code.n = n;
  c.code.k = k;
  c.stripe_list_count = stripe_lists;
  c.proxies = proxies;
  c.servers.resize(servers);
  std::iota(c.servers.begin(), c.servers.end(), ServerId{0});
  c.finalize();
  return c;
}

void ClusterConfig::finalize() {
  try {
    code.validate();
  } catch (const CodecError& e) {
    throw ConfigError(e.what());
  }
  for (ServerId s : servers) {
    if (!is_server_id(s)) throw ConfigError("server IDs must be below " + std::to_string(kProxyIdBase));
  }
  if (proxies < 0 || proxies > static_cast<int>(kCoordinatorId - kProxyIdBase)) {
    throw ConfigError("bad proxy count");
  }
  if (chunk_size < 64 || chunk_size > (1u << 24)) throw ConfigError("chunk_size out of range");
  if (unsealed_per_list == 0) throw ConfigError("unsealed_per_list must be positive");
  if (lists.empty()) {
    try {
      lists = generate_stripe_lists(servers, code.n, code.k, stripe_list_count);
    } catch (const PlacementError& e) {
      throw ConfigError(e.what());
    }
  }
  stripe_list_count = static_cast<int>(lists.size());
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const auto& l = lists[i];
    if (l.id != i) throw ConfigError("stripe list IDs must be 0..c-1 in order");
    if (l.n() != code.n || l.k() != code.k) throw ConfigError("stripe list shape does not match n, k");
    for (ServerId s : l.members()) {
      if (std::find(servers.begin(), servers.end(), s) == servers.end()) {
        throw ConfigError("stripe list " + std::to_string(i) + " names unknown server " + std::to_string(s));
      }
    }
  }
}

std::vector<NodeId> ClusterConfig::proxy_ids() const {
  std::vector<NodeId> out(proxies);
  std::iota(out.begin(), out.end(), kProxyIdBase);
  return out;
}

StoreConfig ClusterConfig::store_config() const {
  StoreConfig s;
  s.chunk_size = chunk_size;
  s.max_chunks = max_chunks;
  s.unsealed_per_list = unsealed_per_list;
  s.object_capacity = object_capacity;
  return s;
}

ClusterConfig parse_cluster_config(std::string_view text) {
  ClusterConfig c;
  int server_count = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  auto number = [&](std::istringstream& is, const std::string& what) {
    long long v;
    if (!(is >> v) || v < 0) {
      throw ConfigError("line " + std::to_string(lineno) + ": bad value for " + what);
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream is(line);
    std::string word;
    if (!(is >> word)) continue;
    if (word == "n") c.code.n = static_cast<int>(number(is, word));
    else if (word == "k") c.code.k = static_cast<int>(number(is, word));
    else if (word == "scheme") {
      std::string s;
      is >> s;
      if (s == "rs") c.code.scheme = CodeScheme::reed_solomon;
      else if (s == "xor") c.code.scheme = CodeScheme::single_parity_xor;
      else throw ConfigError("line " + std::to_string(lineno) + ": scheme must be rs or xor");
    } else if (word == "stripe_lists") c.stripe_list_count = static_cast<int>(number(is, word));
    else if (word == "chunk_size") c.chunk_size = number(is, word);
    else if (word == "servers") server_count = static_cast<int>(number(is, word));
    else if (word == "proxies") c.proxies = static_cast<int>(number(is, word));
    else if (word == "unsealed_per_list") c.unsealed_per_list = number(is, word);
    else if (word == "max_chunks") c.max_chunks = number(is, word);
    else if (word == "objects") c.object_capacity = number(is, word);
    else if (word == "address") {
      NodeId id = static_cast<NodeId>(number(is, word));
      std::string addr;
      if (!(is >> addr)) throw ConfigError("line " + std::to_string(lineno) + ": address needs host:port");
      c.addresses[id] = addr;
    } else if (word == "list") {
      std::string rest;
      std::getline(is, rest);
      try {
        c.lists.push_back(parse_stripe_list(rest));
      } catch (const std::exception& e) {
        throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
      }
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown directive '" + word + "'");
    }
  }
  c.servers.resize(server_count);
  std::iota(c.servers.begin(), c.servers.end(), ServerId{0});
  c.finalize();
  return c;
}

ClusterConfig load_cluster_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_cluster_config(ss.str());
}

std::string format_cluster_config(const ClusterConfig& c) {
  std::ostringstream os;
  os << "n " << c.code.n << "\nk " << c.code.k << "\nscheme "
     << (c.code.scheme == CodeScheme::reed_solomon ? "rs" : "xor") << "\nstripe_lists "
     << c.lists.size() << "\nchunk_size " << c.chunk_size << "\nservers " << c.servers.size()
     << "\nproxies " << c.proxies << "\nunsealed_per_list " << c.unsealed_per_list
     << "\nmax_chunks " << c.max_chunks << "\nobjects " << c.object_capacity << '\n';
  for (const auto& [id, addr] : c.addresses) os << "address " << id << ' ' << addr << '\n';
  for (const auto& l : c.lists) os << "list " << format_stripe_list(l) << '\n';
  return os.str();
}

}  // namespace eckv
