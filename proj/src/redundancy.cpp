#include "eckv/redundancy.hpp"

#include <string>

namespace eckv {

void RedundancyParams::validate() const {
  for (double v : {K, V, M, R, C, I}) {
    if (!(v > 0)) throw std::invalid_argument("sizes must be positive");
  }
  if (!(O > 0 && O <= 1)) throw std::invalid_argument("occupancy must be in (0, 1]");
  if (k < 1 || n <= k) throw std::invalid_argument("need n > k >= 1");
}

RedundancyReport redundancy_report(const RedundancyParams& p) {
  p.validate();
  const double object = p.K + p.V + p.M;
  const double copies = p.n - p.k + 1;
  const double stretch = static_cast<double>(p.n) / p.k;
  RedundancyReport r;
  r.all_replication = copies * (p.K + p.V + p.M + p.R) / object;
  r.hybrid_encoding = (copies * (p.K + p.M + p.R) + stretch * p.V) / object;
  // Per-chunk index entries are amortized over the objects one chunk holds.
  const double objects_per_chunk = p.C / object;
  r.all_encoding =
      (stretch * object + p.R / p.O + stretch * (p.I + p.R / p.O) / objects_per_chunk) / object;
  return r;
}

double all_encoding_limit(const RedundancyParams& p) {
  p.validate();
  const double stretch = static_cast<double>(p.n) / p.k;
  return stretch + stretch * (p.I + p.R / p.O) / p.C;
}

double ratio(const RedundancyReport& r, DataModel m) {
  switch (m) {
    case DataModel::all_replication: return r.all_replication;
    case DataModel::hybrid_encoding: return r.hybrid_encoding;
    case DataModel::all_encoding: return r.all_encoding;
  }
  return 0;
}

std::vector<SweepPoint> redundancy_sweep(RedundancyParams p, int lo, int hi) {
  if (lo < 1 || hi < lo) throw std::invalid_argument("sweep range must satisfy 1 <= lo <= hi");
  std::vector<SweepPoint> out;
  out.reserve(static_cast<std::size_t>(hi - lo + 1));
  for (int v = lo; v <= hi; ++v) {
    p.V = v;
    out.push_back({static_cast<double>(v), redundancy_report(p)});
  }
  return out;
}

std::optional<int> first_value_size_at_or_below(RedundancyParams p, DataModel m, double threshold,
                                                int lo, int hi) {
  for (int v = lo; v <= hi; ++v) {
    p.V = v;
    if (ratio(redundancy_report(p), m) <= threshold) return v;
  }
  return std::nullopt;
}

}  // namespace eckv
