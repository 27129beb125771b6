// The field configurations.  Link and detector values are the measured
// ones, as are the encodings.  Four per-preset values are effective: the
// two extra arm losses plus the detection window were fitted to the
// recorded single-arm detection rows and the both-vacuum row, and the
// fringe visibility to the (mu1, mu1) X-basis error rate (see README).
#pragma once

#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "snstf/bench/config.hpp"

namespace snstf {

inline std::vector<std::string> preset_names() { return {"sym546", "sym603", "asym452"}; }

namespace detail {

inline PartySettings encoding(double muZ, double mu2, double mu1, double eps) {
  PartySettings p;
  p.muZ = muZ;
  p.mu2 = mu2;
  p.mu1 = mu1;
  p.mu0 = 0.0002;
  p.pSignalWindow = 0.735;
  p.epsilonSend = eps;
  p.pMu0 = 0.078;
  p.pMu1 = 0.606;
  p.pMu2 = 0.316;
  return p;
}

inline ExperimentConfig field_base() {
  ExperimentConfig c;
  c.link.attenDbPerKm = 0.183;
  c.detectors = {0.83, 0.49, 7.80, 1.77, 1.0};
  c.security.mode = RateMode::kFinite;
  return c;
}

}  // namespace detail

inline ExperimentConfig preset(const std::string& name) {
  using std::numbers::pi;
  ExperimentConfig c = detail::field_base();
  c.name = name;
  if (name == "sym546") {
    c.link.lenAliceKm = 273.48;
    c.link.lenBobKm = 273.13;
    c.link.measuredLossAliceDb = 50.50;
    c.link.measuredLossBobDb = 49.63;
    c.link.extraLossAliceDb = 2.975;
    c.link.extraLossBobDb = 4.062;
    c.detectors.windowNs = 0.549;
    c.partyA = c.partyB = detail::encoding(0.493, 0.493, 0.090, 0.269);
    c.noise.freeDriftRateStd = 2 * pi * 2.63e3;
    c.noise.residualPhaseStdRad = 0.20;
    c.noise.visibility = 0.8516;
    c.run.N = 2.772e13;
  } else if (name == "sym603") {
    c.link.lenAliceKm = 298.71;
    c.link.lenBobKm = 305.16;
    c.link.attenDbPerKm = 0.180;
    c.link.measuredLossAliceDb = 54.74;
    c.link.measuredLossBobDb = 53.85;
    c.link.extraLossAliceDb = 1.869;
    c.link.extraLossBobDb = 2.830;
    c.detectors = {0.70, 0.47, 4.15, 1.18, 0.829};
    c.partyA = c.partyB = detail::encoding(0.423, 0.252, 0.056, 0.269);
    c.noise.freeDriftRateStd = 2 * pi * 2.11e3;
    c.noise.residualPhaseStdRad = 0.23;
    c.noise.visibility = 0.8792;
    c.security.mode = RateMode::kAsymptotic;
    c.run.N = 4.05e12;
  } else if (name == "asym452") {
    c.link.lenAliceKm = 248.24;
    c.link.lenBobKm = 204.22;
    c.link.measuredLossAliceDb = 46.85;
    c.link.measuredLossBobDb = 37.77;
    c.link.extraLossAliceDb = 5.306;
    c.link.extraLossBobDb = 2.885;
    c.partyA = detail::encoding(0.493, 0.493, 0.113, 0.405);
    c.partyB = detail::encoding(0.247, 0.077, 0.018, 0.141);
    c.noise.freeDriftRateStd = 2 * pi * 2.14e3;
    c.noise.residualPhaseStdRad = 0.25;
    c.noise.visibility = 0.9708;
    c.run.N = 4.28e12;
  } else {
    throw ConfigError("preset", "unknown preset '" + name + "'");
  }
  validate(c);
  return c;
}

}  // namespace snstf
