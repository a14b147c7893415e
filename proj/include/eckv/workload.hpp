#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace eckv {

class WorkloadError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Zipf over ranks 0..n-1 (rank 0 most popular), by the rejection-free
/// method YCSB uses. P(rank r) is proportional to 1 / (r+1)^theta.
class ZipfGenerator {
 public:
  ZipfGenerator(std::uint64_t n, double theta);
  std::uint64_t next(std::mt19937_64& rng) const;
  double probability(std::uint64_t rank) const;
  std::uint64_t size() const { return n_; }

 private:
  std::uint64_t n_;
  double theta_;
  double zetan_;
  double alpha_;
  double eta_;
};

enum class OpType { set, get, update, del, rmw };
const char* op_name(OpType t);

struct OpMix {
  double get = 0;
  double update = 0;
  double set = 0;
  double rmw = 0;
};
/// "load", "A", "B", "C", "D", "F".
OpMix mix_for(const std::string& workload);

struct WorkloadSpec {
  std::string name = "A";
  std::size_t records = 10000;
  std::size_t ops = 40000;
  std::size_t key_size = 24;
  std::vector<std::size_t> value_sizes{8, 32};  // assigned to keys round-robin
  double theta = 0.99;
  std::size_t clients = 16;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Operation {
  OpType type = OpType::get;
  std::string key;
  std::string value;  // SET / UPDATE / second half of RMW
};

/// Key and value generation plus the per-workload request stream. Every
/// value it produces is unique, which keeps history checking cheap.
class WorkloadGenerator {
 public:
  explicit WorkloadGenerator(WorkloadSpec spec);

  const WorkloadSpec& spec() const { return spec_; }
  std::string key_for(std::uint64_t item) const;
  std::size_t value_size_for(std::uint64_t item) const;
  std::string fresh_value(std::uint64_t item);
  /// The i-th SET of the load phase.
  Operation load_op(std::uint64_t i);
  /// Next request of the main phase.
  Operation next();
  std::uint64_t inserted() const { return inserted_; }

 private:
  std::uint64_t pick_existing();

  WorkloadSpec spec_;
  OpMix mix_;
  std::mt19937_64 rng_;
  ZipfGenerator zipf_;
  std::uint64_t inserted_;
  std::uint64_t version_ = 0;
};

}  // namespace eckv
