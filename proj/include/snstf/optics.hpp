// Physical-layer models: link loss, interference at the central beam
// splitter with threshold detectors, and the drifting channel phase.
#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include "snstf/random.hpp"
#include "snstf/ratecore.hpp"

namespace snstf {

enum class Arm { kAlice, kBob };
enum class Detector { kD0 = 0, kD1 = 1 };

/// Fiber link from each user to the measurement node.  When a measured arm
/// loss is present it replaces length x attenuation; the extra loss is the
/// node's own components in front of the beam splitter.
struct LinkConfig {
  double lenAliceKm = 0.0;
  double lenBobKm = 0.0;
  double attenDbPerKm = 0.183;
  double extraLossAliceDb = 0.0;
  double extraLossBobDb = 0.0;
  std::optional<double> measuredLossAliceDb;
  std::optional<double> measuredLossBobDb;

  bool operator==(const LinkConfig&) const = default;
};

struct DetectorModel {
  double effD0 = 0.66;
  double effD1 = 0.66;
  double darkD0Hz = 0.0;
  double darkD1Hz = 0.0;
  double windowNs = 1.0;

  bool operator==(const DetectorModel&) const = default;
};

/// Drift and imperfection parameters.  Rates in rad/s unless the name
/// says Hz.
struct NoiseModel {
  double freeDriftRateStd = 2.0 * std::numbers::pi * 2.63e3;
  // Correlation time of the fiber-induced frequency excursion.
  double driftCorrelationS = 0.2;
  double laserDriftHzPerHour = 1777.0;
  // Peak deviation of the laser offset around the linear drift.
  double laserWanderHz = 200.0;
  double clockAccuracy = 5e-11;
  double combSpanGHz = 100.0;
  double lambdaQnm = 1550.495;
  double lambdaCnm = 1549.694;
  double visibility = 0.9795;
  double timingJitterPs = 8.4;
  double pulseWidthPs = 300.0;
  double diurnalDelayNs = 20.0;
  // Std of the stabilized quantum-band phase seen by the key windows.
  double residualPhaseStdRad = 0.20;

  bool operator==(const NoiseModel&) const = default;
};

/// Differential phases between the two users' fields as seen at the
/// beam splitter, before any actuator correction.  Stored unwrapped.
struct ChannelPhaseState {
  double phiQ = 0.0;
  double phiC = 0.0;
  double fiberRate = 0.0;  // instantaneous fiber-induced rate of phiC, rad/s
  double freqOffsetHz = 0.0;
  double timeOffsetAPs = 0.0;
  double timeOffsetBPs = 0.0;
  double tS = 0.0;
};

inline double wrap_phase(double phi) {
  const double twoPi = 2.0 * std::numbers::pi;
  double r = std::fmod(phi + std::numbers::pi, twoPi);
  if (r < 0.0) r += twoPi;
  return r - std::numbers::pi;
}

inline void validate(const LinkConfig& l) {
  auto neg = [](double x) { return !(x >= 0.0); };
  if (neg(l.lenAliceKm) || neg(l.lenBobKm) || neg(l.attenDbPerKm) || neg(l.extraLossAliceDb) ||
      neg(l.extraLossBobDb) || (l.measuredLossAliceDb && neg(*l.measuredLossAliceDb)) ||
      (l.measuredLossBobDb && neg(*l.measuredLossBobDb)))
    throw std::invalid_argument("link: lengths and losses must be nonnegative");
}

inline double dark_probability(const DetectorModel& d, Detector which) {
  const double hz = which == Detector::kD0 ? d.darkD0Hz : d.darkD1Hz;
  return hz * d.windowNs * 1e-9;
}

inline double efficiency(const DetectorModel& d, Detector which) {
  return which == Detector::kD0 ? d.effD0 : d.effD1;
}

inline void validate(const DetectorModel& d) {
  if (!is_probability(d.effD0) || !is_probability(d.effD1))
    throw std::invalid_argument("detectors: efficiencies must lie in [0,1]");
  if (!(d.darkD0Hz >= 0.0 && d.darkD1Hz >= 0.0 && d.windowNs > 0.0))
    throw std::invalid_argument("detectors: dark rates and window must be nonnegative");
  if (dark_probability(d, Detector::kD0) >= 1e-3 || dark_probability(d, Detector::kD1) >= 1e-3)
    throw std::invalid_argument("detectors: dark probability per window must be < 1e-3");
}

inline void validate(const NoiseModel& n) {
  for (double x : {n.freeDriftRateStd, n.laserDriftHzPerHour, n.laserWanderHz, n.clockAccuracy,
                   n.combSpanGHz, n.lambdaQnm, n.lambdaCnm, n.timingJitterPs, n.diurnalDelayNs,
                   n.residualPhaseStdRad})
    if (!(x >= 0.0)) throw std::invalid_argument("noise: parameters must be nonnegative");
  if (!(n.driftCorrelationS > 0.0)) throw std::invalid_argument("noise: driftCorrelationS must be > 0");
  if (!(n.pulseWidthPs > 0.0)) throw std::invalid_argument("noise: pulseWidthPs must be > 0");
  if (!is_probability(n.visibility)) throw std::invalid_argument("noise: visibility must lie in [0,1]");
}

inline double fiber_loss_db(const LinkConfig& l, Arm arm) {
  if (arm == Arm::kAlice)
    return l.measuredLossAliceDb ? *l.measuredLossAliceDb : l.lenAliceKm * l.attenDbPerKm;
  return l.measuredLossBobDb ? *l.measuredLossBobDb : l.lenBobKm * l.attenDbPerKm;
}

/// End-to-end fiber loss between the two users; the repeaterless bound is
/// evaluated on this figure.
inline double total_fiber_loss_db(const LinkConfig& l) {
  return fiber_loss_db(l, Arm::kAlice) + fiber_loss_db(l, Arm::kBob);
}

inline double arm_loss_db(const LinkConfig& l, Arm arm) {
  return fiber_loss_db(l, arm) + (arm == Arm::kAlice ? l.extraLossAliceDb : l.extraLossBobDb);
}

/// Transmittance from one user's output to the beam splitter.
inline double channel_transmittance(const LinkConfig& l, Arm arm) {
  return db_to_transmittance(arm_loss_db(l, arm));
}

inline double arm_transmittance(const LinkConfig& l, Arm arm, const DetectorModel& d, Detector which) {
  return channel_transmittance(l, arm) * efficiency(d, which);
}

struct ClickPair {
  double d0 = 0.0;
  double d1 = 0.0;
};

/// Marginal click probabilities of two threshold detectors behind a
/// 50/50 beam splitter fed by phase-locked coherent states of mean photon
/// numbers muA, muB (already attenuated by the channel) and relative phase
/// delta.  D0 is the constructive port at delta = 0.
inline ClickPair click_probabilities(double muA, double muB, double delta, double visibility,
                                     double pd0, double pd1, double eff0 = 1.0, double eff1 = 1.0) {
  const double mean = 0.5 * (muA + muB);
  const double fringe = visibility * std::sqrt(muA * muB) * std::cos(delta);
  const double n0 = eff0 * (mean + fringe);
  const double n1 = eff1 * (mean - fringe);
  return {1.0 - (1.0 - pd0) * std::exp(-n0), 1.0 - (1.0 - pd1) * std::exp(-n1)};
}

/// Outcome probabilities of one window; detectors are independent given
/// the coherent input.
struct HeraldProbabilities {
  double d0Only = 0.0;
  double d1Only = 0.0;
  double both = 0.0;
  double any() const { return d0Only + d1Only + both; }
};

inline HeraldProbabilities herald_probabilities(const ClickPair& c) {
  return {c.d0 * (1.0 - c.d1), c.d1 * (1.0 - c.d0), c.d0 * c.d1};
}

/// Reduction of the quantum-band drift when the classical band is locked.
inline double dual_band_reduction_factor(const NoiseModel& n) {
  const double gap = std::abs(n.lambdaCnm - n.lambdaQnm);
  if (gap <= 1e-12 * std::abs(n.lambdaCnm))
    throw std::domain_error("dual_band_reduction_factor: wavelengths coincide");
  return n.lambdaCnm / gap;
}

/// Overlap penalty on interference visibility from an arrival offset
/// between two Gaussian pulses.
inline double timing_overlap_visibility(double offsetPs, double pulseWidthPs) {
  if (!(pulseWidthPs > 0.0)) throw std::invalid_argument("pulse width must be positive");
  return std::exp(-offsetPs * offsetPs / (2.0 * pulseWidthPs * pulseWidthPs));
}

/// Visibility used for key windows: measured fringe visibility times the
/// timing-overlap penalty from residual jitter.
inline double effective_visibility(const NoiseModel& n) {
  return n.visibility * timing_overlap_visibility(n.timingJitterPs, n.pulseWidthPs);
}

/// Constant quantum-band drift left when the classical band is perfectly
/// locked: two independent clock references of fractional accuracy a
/// misplace a comb line spanGHz away by sqrt(2) a span.
inline double clock_floor_rate(const NoiseModel& n) {
  return 2.0 * std::numbers::pi * std::sqrt(2.0) * n.clockAccuracy * n.combSpanGHz * 1e9;
}

/// Phase of the fiber term over an interval of length h, for a stationary
/// OU rate of std 1 and correlation time tc, has variance
/// 2 tc^2 (h/tc - 1 + e^{-h/tc}).
inline double ou_interval_phase_variance(double h, double tc) {
  const double x = h / tc;
  // Series for small x avoids cancellation.
  if (x < 1e-4) return h * h * (1.0 - x / 3.0 + x * x / 12.0);
  return 2.0 * tc * tc * (x - 1.0 + std::exp(-x));
}

/// Stationary rate std that makes (phi(t+tau) - phi(t)) / tau have std
/// equal to the configured free drift rate.
inline constexpr double kDriftRateIntervalS = 1e-3;

inline double fiber_rate_std(const NoiseModel& n, double intervalS = kDriftRateIntervalS) {
  return n.freeDriftRateStd * intervalS / std::sqrt(ou_interval_phase_variance(intervalS, n.driftCorrelationS));
}

/// Ratio nu_q / nu_c by which fiber phase at the quantum band exceeds the
/// classical band.
inline double band_frequency_ratio(const NoiseModel& n) { return n.lambdaCnm / n.lambdaQnm; }

/// Draws a stationary initial fiber rate.
inline ChannelPhaseState initial_phase_state(const NoiseModel& n, Rng& rng) {
  ChannelPhaseState s;
  s.fiberRate = fiber_rate_std(n) * rng.normal();
  return s;
}

/// Advances the channel by dt.  The fiber rate is an Ornstein-Uhlenbeck
/// process and (rate, phase) are updated with the exact Gaussian transition
/// of the integrated process, so any subdivision of dt gives the same law.
/// frequencyShiftHz is an applied correction (e.g. acousto-optic
/// pre-compensation) added to the laser offset.
inline ChannelPhaseState phase_step(const ChannelPhaseState& in, double dt, const NoiseModel& n, Rng& rng,
                                    double frequencyShiftHz = 0.0) {
  if (!(dt > 0.0)) throw std::invalid_argument("phase_step: dt must be positive");
  ChannelPhaseState out = in;
  const double tc = n.driftCorrelationS;
  const double sr = fiber_rate_std(n);
  const double mu = std::exp(-dt / tc);

  double dPhiFiber = in.fiberRate * tc * (1.0 - mu);
  double newRate = in.fiberRate * mu;
  if (sr > 0.0) {
    const double varRate = sr * sr * (1.0 - mu * mu);
    const double varPhase =
        2.0 * sr * sr * tc * tc * (dt / tc - 2.0 * (1.0 - mu) + 0.5 * (1.0 - mu * mu));
    const double cov = sr * sr * tc * (1.0 - mu) * (1.0 - mu);
    const double sdRate = std::sqrt(varRate);
    const double g1 = rng.normal();
    const double g2 = rng.normal();
    newRate += sdRate * g1;
    // Conditional draw of the phase given the rate innovation.
    const double beta = sdRate > 0.0 ? cov / sdRate : 0.0;
    const double resid = std::max(0.0, varPhase - beta * beta);
    dPhiFiber += beta * g1 + std::sqrt(resid) * g2;
  }

  const double twoPi = 2.0 * std::numbers::pi;
  const double slope = n.laserDriftHzPerHour / 3600.0;
  // Laser offset integrated exactly over the linear ramp.
  const double meanOffset = in.freqOffsetHz + frequencyShiftHz + 0.5 * slope * dt;
  const double laserPhase = twoPi * meanOffset * dt;

  out.fiberRate = newRate;
  out.phiC = in.phiC + dPhiFiber + laserPhase;
  out.phiQ = in.phiQ + band_frequency_ratio(n) * dPhiFiber + laserPhase + clock_floor_rate(n) * dt;
  out.freqOffsetHz = in.freqOffsetHz + slope * dt;
  out.tS = in.tS + dt;
  return out;
}

}  // namespace snstf
