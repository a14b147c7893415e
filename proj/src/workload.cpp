#include "eckv/workload.hpp"

#include <cmath>
#include <cstdio>

namespace eckv {
namespace {

double zeta(std::uint64_t n, double theta) {
  double sum = 0;
  for (std::uint64_t i = 1; i <= n; ++i) sum += 1.0 / std::pow(static_cast<double>(i), theta);
  return sum;
}

}  // namespace

ZipfGenerator::ZipfGenerator(std::uint64_t n, double theta) : n_(n), theta_(theta) {
  if (n == 0) throw WorkloadError("zipf needs at least one item");
  if (!(theta > 0 && theta < 1)) throw WorkloadError("zipf theta must be in (0, 1)");
  zetan_ = zeta(n, theta);
  alpha_ = 1.0 / (1.0 - theta);
  const double zeta2 = zeta(2, theta);
  eta_ = (1.0 - std::pow(2.0 / static_cast<double>(n), 1.0 - theta)) / (1.0 - zeta2 / zetan_);
}

std::uint64_t ZipfGenerator::next(std::mt19937_64& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double uz = u * zetan_;
  if (uz < 1.0) return 0;
  if (n_ > 1 && uz < 1.0 + std::pow(0.5, theta_)) return 1;
  const auto r = static_cast<std::uint64_t>(static_cast<double>(n_) * std::pow(eta_ * u - eta_ + 1.0, alpha_));
  return r >= n_ ? n_ - 1 : r;
}

double ZipfGenerator::probability(std::uint64_t rank) const {
  return 1.0 / std::pow(static_cast<double>(rank + 1), theta_) / zetan_;
}

const char* op_name(OpType t) {
  switch (t) {
    case OpType::set: return "SET";
    case OpType::get: return "GET";
    case OpType::update: return "UPDATE";
    case OpType::del: return "DELETE";
    case OpType::rmw: return "RMW";
  }
  return "?";
}

OpMix mix_for(const std::string& w) {
  if (w == "load") return {0, 0, 1, 0};
  if (w == "A") return {0.5, 0.5, 0, 0};
  if (w == "B") return {0.95, 0.05, 0, 0};
  if (w == "C") return {1, 0, 0, 0};
  if (w == "D") return {0.95, 0, 0.05, 0};
  if (w == "F") return {0.5, 0, 0, 0.5};
  throw WorkloadError("unknown workload '" + w + "' (load, A, B, C, D, F)");
}

void WorkloadSpec::validate() const {
  mix_for(name);
  if (records == 0) throw WorkloadError("records must be positive");
  if (key_size < 8 || key_size > 255) throw WorkloadError("key size must be in [8, 255]");
  if (value_sizes.empty()) throw WorkloadError("need at least one value size");
  for (auto v : value_sizes) {
    if (v < 8) throw WorkloadError("value sizes below 8 bytes cannot hold unique versions");
  }
  if (clients == 0) throw WorkloadError("clients must be positive");
}

WorkloadGenerator::WorkloadGenerator(WorkloadSpec spec)
    : spec_((spec.validate(), std::move(spec))),
      mix_(mix_for(spec_.name)),
      rng_(spec_.seed),
      zipf_(spec_.records, spec_.theta),
      inserted_(spec_.records) {}

std::string WorkloadGenerator::key_for(std::uint64_t item) const {
  std::string digits = std::to_string(item);
  std::string key = "user";
  if (digits.size() + key.size() < spec_.key_size) key.append(spec_.key_size - key.size() - digits.size(), '0');
  return key + digits;
}

std::size_t WorkloadGenerator::value_size_for(std::uint64_t item) const {
  return spec_.value_sizes[item % spec_.value_sizes.size()];
}

std::string WorkloadGenerator::fresh_value(std::uint64_t item) {
  // 8 hex digits of a global version counter lead; the rest is filler.
  char head[9];
  std::snprintf(head, sizeof head, "%08llx", static_cast<unsigned long long>(++version_ & 0xFFFFFFFFull));
  std::string v(head, 8);
  const std::size_t size = value_size_for(item);
  while (v.size() < size) v.push_back(static_cast<char>('a' + (v.size() + item) % 26));
  return v;
}

Operation WorkloadGenerator::load_op(std::uint64_t i) {
  return Operation{OpType::set, key_for(i), fresh_value(i)};
}

std::uint64_t WorkloadGenerator::pick_existing() {
  const std::uint64_t rank = zipf_.next(rng_);
  if (spec_.name == "D") {
    // Read-latest: popularity follows recency of insertion.
    return inserted_ - 1 - rank % inserted_;
  }
  return rank % inserted_;
}

Operation WorkloadGenerator::next() {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  if (u < mix_.set) {
    const std::uint64_t item = inserted_++;
    return Operation{OpType::set, key_for(item), fresh_value(item)};
  }
  const std::uint64_t item = pick_existing();
  if (u < mix_.set + mix_.get) return Operation{OpType::get, key_for(item), {}};
  if (u < mix_.set + mix_.get + mix_.update) return Operation{OpType::update, key_for(item), fresh_value(item)};
  return Operation{OpType::rmw, key_for(item), fresh_value(item)};
}

}  // namespace eckv
