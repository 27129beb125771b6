// Key rate against total distance for a fixed parameter set.
#pragma once

#include <algorithm>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "snstf/bench/config.hpp"
#include "snstf/bench/pipeline.hpp"

namespace snstf {

struct SweepRow {
  double distanceKm = 0;
  double totalLossDb = 0;
  double skrBitPerSignal = 0;
  double skrBitPerS = 0;
  double skc0BitPerSignal = 0;
  double ratio = 0;
};

/// Places the distance on the two arms with measured losses dropped, so
/// loss follows length x attenuation.  The split keeps the template's
/// arm-loss difference (fiber plus extra loss).  The users' intensities are tuned
/// for that difference: a balanced template stays balanced.
inline ExperimentConfig at_distance(const ExperimentConfig& tmpl, double distanceKm) {
  ExperimentConfig c = tmpl;
  const LinkConfig& l = tmpl.link;
  const double diff = arm_loss_db(l, Arm::kAlice) - arm_loss_db(l, Arm::kBob);
  const double fiber = distanceKm * l.attenDbPerKm;
  const double fiberA = std::clamp(0.5 * (fiber + diff - l.extraLossAliceDb + l.extraLossBobDb), 0.0, fiber);
  const double shareA = fiber > 0 ? fiberA / fiber : 0.5;
  c.link.lenAliceKm = distanceKm * shareA;
  c.link.lenBobKm = distanceKm * (1.0 - shareA);
  c.link.measuredLossAliceDb.reset();
  c.link.measuredLossBobDb.reset();
  return c;
}

inline std::vector<SweepRow> sweep(const ExperimentConfig& tmpl, const std::vector<double>& distancesKm, RateMode mode) {
  for (std::size_t i = 1; i < distancesKm.size(); ++i)
    if (!(distancesKm[i] >= distancesKm[i - 1])) throw std::invalid_argument("sweep: distances must be nondecreasing");
  for (double d : distancesKm)
    if (!(d >= 0)) throw std::invalid_argument("sweep: distances must be >= 0");
  std::vector<SweepRow> rows;
  for (double d : distancesKm) {
    const KeyRateReport r = analytic_report(at_distance(tmpl, d), mode);
    rows.push_back({d, r.totalLossDb, r.skr, r.skrPerSecond, r.skc0, r.ratio});
  }
  return rows;
}

inline void write_sweep(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "distance_km,total_loss_db,skr_bit_per_signal,skr_bit_per_s,skc0_bit_per_signal,ratio\n";
  os.precision(10);
  for (const auto& r : rows)
    os << r.distanceKm << ',' << r.totalLossDb << ',' << r.skrBitPerSignal << ',' << r.skrBitPerS << ','
       << r.skc0BitPerSignal << ',' << r.ratio << '\n';
}

}  // namespace snstf
