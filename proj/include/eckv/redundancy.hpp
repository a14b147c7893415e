#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

namespace eckv {

/// Sizes in bytes; occupancy is the index load fraction.
struct RedundancyParams {
  double K = 8;    // key
  double V = 2;    // value
  double M = 4;    // metadata
  double R = 8;    // reference (pointer) in an index
  double C = 4096; // chunk size
  double I = 8;    // chunk ID
  double O = 0.9;  // index occupancy
  int n = 10;
  int k = 8;

  /// Throws std::invalid_argument.
  void validate() const;
};

/// Storage used per byte of object (K + V + M), for three data models.
struct RedundancyReport {
  double all_replication = 0;
  double hybrid_encoding = 0;
  double all_encoding = 0;
};

RedundancyReport redundancy_report(const RedundancyParams& p);

/// The limit of the all-encoding ratio as V grows without bound.
double all_encoding_limit(const RedundancyParams& p);

enum class DataModel { all_replication, hybrid_encoding, all_encoding };
double ratio(const RedundancyReport& r, DataModel m);

struct SweepPoint {
  double V;
  RedundancyReport report;
};
/// Integer value sizes lo..hi inclusive.
std::vector<SweepPoint> redundancy_sweep(RedundancyParams p, int lo, int hi);

/// Smallest integer V in [lo, hi] with ratio <= threshold.
std::optional<int> first_value_size_at_or_below(RedundancyParams p, DataModel m, double threshold,
                                                int lo, int hi);

}  // namespace eckv
