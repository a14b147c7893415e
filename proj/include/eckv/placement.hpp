#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace eckv {

using ServerId = std::uint32_t;

class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StripeList {
  std::uint16_t id = 0;
  std::vector<ServerId> data_servers;
  std::vector<ServerId> parity_servers;

  int k() const { return static_cast<int>(data_servers.size()); }
  int n() const { return static_cast<int>(data_servers.size() + parity_servers.size()); }
  ServerId server_at(int position) const {
    return position < k() ? data_servers.at(position) : parity_servers.at(position - k());
  }
  /// Chunk position of `server` in this list, or -1.
  int position_of(ServerId server) const;
  bool contains(ServerId server) const { return position_of(server) >= 0; }
  std::vector<ServerId> members() const;

  friend bool operator==(const StripeList&, const StripeList&) = default;
};

/// Iteratively picks the n-k least-loaded servers as parities, then the k
/// next least-loaded as data servers (ties to the smaller ID); each data
/// server's load grows by 1 and each parity server's by k.
std::vector<StripeList> generate_stripe_lists(std::span<const ServerId> servers, int n, int k,
                                              int c);

struct KeyPlacement {
  std::uint16_t stripe_list = 0;
  int position = 0;
  ServerId data_server = 0;
};

/// Two-stage hashing: key -> stripe list, then key -> data position.
KeyPlacement map_key(std::string_view key, std::span<const StripeList> lists);

/// "id <id> data <ids...> parity <ids...>", one list per line.
std::string format_stripe_list(const StripeList& list);
StripeList parse_stripe_list(std::string_view line);

}  // namespace eckv
