// Feedback loops that keep the two users' fields interfering: the fast
// classical-band phase lock, the slow quantum-band lock, laser frequency
// pre-compensation and arrival-time alignment.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "snstf/optics.hpp"
#include "snstf/random.hpp"

namespace snstf {

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  bool operator==(const PidGains&) const = default;
};

/// Loop timing and actuator settings.  Gains are the reference
/// tuning; see README for the procedure that produced them.
struct LoopConfig {
  double fastIntervalUs = 10.0;
  double fastRateHz = 1e5;
  double slowRateHz = 1e3;
  double dcTargetCountsHz = 6e6;  // classical-band rate at the mid-fringe set point
  double dcVisibility = 0.98;
  double refCountsHz = 2e5;  // weak quantum reference rate at D0, mid-fringe
  double refVisibility = 0.98;
  PidGains fastGains{0.8, 0.001, 0.0};
  PidGains slowGains{0.35, 0.02, 0.0};
  double pmRangeRad = 2.0 * std::numbers::pi;
  double fsRangeRad = 20.0 * std::numbers::pi;
  double fsMaxSlewRadPerS = 2000.0;
  double fsBlankingS = 1e-3;
  double rateWindowS = 10e-3;  // averaging window of the drift-rate estimator
  bool aomPrecompensation = true;

  bool operator==(const LoopConfig&) const = default;
};

inline void validate(const LoopConfig& l) {
  if (!(l.fastIntervalUs > 0 && l.fastRateHz > 0 && l.slowRateHz > 0))
    throw std::invalid_argument("loop: intervals must be positive");
  if (std::abs(l.fastRateHz * l.fastIntervalUs * 1e-6 - 1.0) > 1e-9)
    throw std::invalid_argument("loop: fastRateHz must equal 1 / fastIntervalUs");
  if (l.slowRateHz > l.fastRateHz) throw std::invalid_argument("loop: slow loop faster than fast loop");
  if (!(l.dcTargetCountsHz > 0 && l.refCountsHz > 0))
    throw std::invalid_argument("loop: count rates must be positive");
  for (const PidGains& g : {l.fastGains, l.slowGains})
    if (!std::isfinite(g.kp) || !std::isfinite(g.ki) || !std::isfinite(g.kd))
      throw std::invalid_argument("loop: gains must be finite");
  if (!(l.pmRangeRad > 0 && l.fsRangeRad > 2.0 * std::numbers::pi && l.fsMaxSlewRadPerS > 0 &&
        l.fsBlankingS >= 0 && l.rateWindowS > 0))
    throw std::invalid_argument("loop: actuator limits must be positive");
}

/// Controller memory.  `output` is the actuator setting; `unwrapped`
/// follows it without range folding so frequency can be read from it.
struct PidState {
  double integral = 0.0;
  double prevError = 0.0;
  double output = 0.0;
  double unwrapped = 0.0;
  bool saturated = false;
  bool reset = false;
  std::uint64_t resets = 0;
  std::uint64_t saturations = 0;
};

/// Phase error inferred from a fringe sample taken at mid-fringe:
/// rate = mean * (1 + V sin(err)).
inline double fringe_error(double observed, double midFringe, double visibility) {
  const double x = (observed / midFringe - 1.0) / visibility;
  return std::asin(std::clamp(x, -1.0, 1.0));
}

namespace detail {
// Integrating PID: the actuator accumulates the controller output, so the
// loop has zero steady-state error for both phase steps and phase ramps.
inline double pid_increment(double err, const PidGains& g, PidState& s) {
  s.integral += err;
  const double u = g.kp * err + g.ki * s.integral + g.kd * (err - s.prevError);
  s.prevError = err;
  return u;
}

inline double fold(double x, double range) {
  const double half = 0.5 * range;
  double r = std::fmod(x + half, range);
  if (r < 0.0) r += range;
  return r - half;
}
}  // namespace detail

/// One 10 us cycle of the classical-band lock.  Returns the phase
/// modulator setting, folded into the actuator range (a 2 pi range wraps
/// without disturbing the fringe).
inline double fast_loop_step(double dcCountsInBin, const LoopConfig& loop, PidState& s) {
  const double mid = loop.dcTargetCountsHz * loop.fastIntervalUs * 1e-6;
  const double err = fringe_error(dcCountsInBin, mid, loop.dcVisibility);
  const double u = detail::pid_increment(err, loop.fastGains, s);
  s.unwrapped -= u;
  s.output = detail::fold(s.output - u, loop.pmRangeRad);
  return s.output;
}

/// One 1 ms cycle of the quantum-band lock on the fiber stretcher.
/// Limits the slew and unwinds by whole fringes near the end of travel;
/// both events are reported through the state flags.
inline double slow_loop_step(double d0ReferenceRateHz, const LoopConfig& loop, PidState& s) {
  s.saturated = false;
  s.reset = false;
  const double err = fringe_error(d0ReferenceRateHz, loop.refCountsHz, loop.refVisibility);
  double u = detail::pid_increment(err, loop.slowGains, s);
  const double maxStep = loop.fsMaxSlewRadPerS / loop.slowRateHz;
  if (std::abs(u) > maxStep) {
    u = std::copysign(maxStep, u);
    s.saturated = true;
    ++s.saturations;
  }
  s.output -= u;
  s.unwrapped -= u;
  if (std::abs(s.output) > 0.5 * loop.fsRangeRad) {
    const double twoPi = 2.0 * std::numbers::pi;
    s.output -= twoPi * std::round(s.output / twoPi);
    s.reset = true;
    ++s.resets;
  }
  return s.output;
}

/// Frequency offset from the phase-modulator history: least-squares slope
/// of the unwrapped correction over `windowS`, in Hz.
inline double frequency_readout(std::span<const double> pmHistory, double windowS) {
  if (pmHistory.size() < 2) throw std::invalid_argument("frequency_readout: need at least 2 samples");
  if (!(windowS > 0.0)) throw std::invalid_argument("frequency_readout: window must be positive");
  const double dt = windowS / static_cast<double>(pmHistory.size() - 1);
  const double twoPi = 2.0 * std::numbers::pi;
  double offset = 0.0, prev = pmHistory[0];
  double st = 0, sy = 0, stt = 0, sty = 0;
  const double n = static_cast<double>(pmHistory.size());
  for (std::size_t i = 0; i < pmHistory.size(); ++i) {
    const double raw = pmHistory[i];
    if (i > 0) {
      const double jump = raw - prev;
      if (jump > std::numbers::pi) offset -= twoPi * std::round(jump / twoPi);
      else if (jump < -std::numbers::pi) offset -= twoPi * std::round(jump / twoPi);
    }
    prev = raw;
    const double y = raw + offset;
    const double t = static_cast<double>(i) * dt;
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
  }
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  return slope / twoPi;
}

/// Acousto-optic shift that cancels the characterised linear laser drift.
inline double aom_precompensation(double tS, const NoiseModel& n) {
  return -n.laserDriftHzPerHour * tS / 3600.0;
}

/// Slow wander of the laser offset around its linear drift: three
/// sinusoids with seeded phases whose amplitudes add up to laserWanderHz,
/// so the peak deviation is bounded by it.
inline double laser_wander_hz(double tS, const NoiseModel& n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, stream::kWander));
  constexpr double periodsS[3] = {2400.0, 8280.0, 25200.0};
  constexpr double weights[3] = {0.5, 0.3, 0.2};
  double f = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    f += weights[k] * std::sin(2.0 * std::numbers::pi * tS / periodsS[k] + phase);
  }
  return n.laserWanderHz * f;
}

/// Offset left after pre-compensation when the true laser offset is the
/// linear drift plus wander.
inline double aom_residual_hz(double tS, const NoiseModel& n, std::uint64_t seed) {
  return n.laserDriftHzPerHour * tS / 3600.0 + laser_wander_hz(tS, n, seed) + aom_precompensation(tS, n);
}

struct TimingUpdate {
  double delayAPs = 0.0;
  double delayBPs = 0.0;
  bool gap = false;
};

/// One 1 s cycle of arrival-time alignment.  Arrivals are measured
/// relative to the common grid; a missing measurement holds both delays.
inline TimingUpdate timing_loop_step(std::optional<double> arrivalAPs, std::optional<double> arrivalBPs,
                                     double delayAPs, double delayBPs, double gain = 1.0) {
  if (!arrivalAPs || !arrivalBPs) return {delayAPs, delayBPs, true};
  return {delayAPs - gain * *arrivalAPs, delayBPs - gain * *arrivalBPs, false};
}

struct TimingSummary {
  double residualStdPs = 0.0;  // std of the A-B misalignment
  double maxAbsResidualPs = 0.0;
  std::uint64_t gaps = 0;
  std::vector<double> delayAPs;
  std::vector<double> delayBPs;
};

/// Alignment under a diurnal fiber delay swing.  Each arm's delay follows
/// a 24 h sinusoid of amplitude diurnalDelayNs with its own phase; the
/// centroid of `countsPerCycle` time-reference detections has std
/// jitter / sqrt(counts).  `missingProbability` drops whole cycles.
inline TimingSummary run_timing_alignment(double durationS, const NoiseModel& n, std::uint64_t seed,
                                          double countsPerCycle = 1e5, double missingProbability = 0.0) {
  Rng rng(derive_seed(seed, stream::kServo, 7));
  const double amp = n.diurnalDelayNs * 1e3;
  const double w = 2.0 * std::numbers::pi / 86400.0;
  auto fiberA = [&](double t) { return amp * std::sin(w * t); };
  auto fiberB = [&](double t) { return amp * std::sin(w * t + 2.0); };
  const double centroidSd = n.timingJitterPs / std::sqrt(std::max(countsPerCycle, 1.0));

  TimingSummary out;
  double dA = -fiberA(0.0), dB = -fiberB(0.0);
  double sum = 0, sum2 = 0;
  const auto cycles = static_cast<std::uint64_t>(durationS);
  for (std::uint64_t k = 1; k <= cycles; ++k) {
    const double t = static_cast<double>(k);
    const double arrA = fiberA(t) + dA;
    const double arrB = fiberB(t) + dB;
    const double mis = arrA - arrB;
    sum += mis;
    sum2 += mis * mis;
    out.maxAbsResidualPs = std::max(out.maxAbsResidualPs, std::abs(mis));
    std::optional<double> mA, mB;
    if (rng.uniform() >= missingProbability) {
      mA = arrA + centroidSd * rng.normal();
      mB = arrB + centroidSd * rng.normal();
    }
    const TimingUpdate u = timing_loop_step(mA, mB, dA, dB);
    out.gaps += u.gap ? 1 : 0;
    dA = u.delayAPs;
    dB = u.delayBPs;
    out.delayAPs.push_back(dA);
    out.delayBPs.push_back(dB);
  }
  if (cycles > 0) {
    const double m = sum / static_cast<double>(cycles);
    out.residualStdPs = std::sqrt(std::max(0.0, sum2 / static_cast<double>(cycles) - m * m));
  }
  return out;
}

enum class Stages { kNone, kFastOnly, kFull };

inline const char* to_string(Stages s) {
  switch (s) {
    case Stages::kNone: return "none";
    case Stages::kFastOnly: return "fastOnly";
    case Stages::kFull: return "full";
  }
  return "?";
}

inline Stages parse_stages(const std::string& s) {
  if (s == "none") return Stages::kNone;
  if (s == "fastOnly") return Stages::kFastOnly;
  if (s == "full") return Stages::kFull;
  throw std::invalid_argument("unknown stages '" + s + "'");
}

/// Drift rates are RMS values about zero, so a constant offset such as the
/// clock floor counts in full.  The free drift is the endpoint difference
/// over 1 ms; the locked quantum-band drift differences consecutive means
/// over LoopConfig::rateWindowS, as a phase read from sparse reference
/// counts has to be averaged before it can be differenced.
struct StabilizationSummary {
  double freeDriftStdRadPerS = 0.0;
  double fastLockedDriftStdRadPerS = 0.0;
  double residualPhaseStdRadC = 0.0;  // classical band, as inferred from Dc bins
  double residualPhaseStdRadQ = 0.0;  // quantum band, true phase after all corrections
  double residualSkewnessQ = 0.0;
  double residualExcessKurtosisQ = 0.0;
  double reductionFactor = 0.0;
  double freqReadoutHz = 0.0;
  std::uint64_t fastCycles = 0;
  std::uint64_t fsResets = 0;
  std::uint64_t fsSaturations = 0;
  double blankedFraction = 0.0;
};

struct StabilizationSample {
  double tS, phiC, phiQ, pm, fs, dcCounts;
};

struct BlankingInterval {
  double startS, endS;
};

struct StabilizationResult {
  StabilizationSummary summary;
  std::vector<StabilizationSample> series;
  std::vector<BlankingInterval> blanking;
};

namespace detail {
struct RunningMoments {
  double n = 0, mean = 0, m2 = 0, m3 = 0, m4 = 0;
  void add(double x) {
    const double n1 = n;
    n += 1;
    const double delta = x - mean, dn = delta / n, dn2 = dn * dn, term1 = delta * dn * n1;
    mean += dn;
    m4 += term1 * dn2 * (n * n - 3 * n + 3) + 6 * dn2 * m2 - 4 * dn * m3;
    m3 += term1 * dn * (n - 2) - 3 * dn * m2;
    m2 += term1;
  }
  double variance() const { return n > 1 ? m2 / n : 0.0; }
  double skewness() const { return m2 > 0 ? std::sqrt(n) * m3 / std::pow(m2, 1.5) : 0.0; }
  double excess_kurtosis() const { return m2 > 0 ? n * m4 / (m2 * m2) - 3.0 : 0.0; }
};

// RMS of differences between consecutive block means.
struct BlockRate {
  std::uint64_t perBlock;
  double blockS;
  std::uint64_t filled = 0;
  double acc = 0, prevMean = 0, sumSq = 0;
  std::uint64_t blocks = 0, diffs = 0;
  void add(double phase) {
    acc += phase;
    if (++filled == perBlock) {
      const double m = acc / static_cast<double>(perBlock);
      if (blocks > 0) {
        const double r = (m - prevMean) / blockS;
        sumSq += r * r;
        ++diffs;
      }
      prevMean = m;
      ++blocks;
      acc = 0;
      filled = 0;
    }
  }
  double rms() const { return diffs ? std::sqrt(sumSq / static_cast<double>(diffs)) : 0.0; }
};

// RMS of endpoint differences over consecutive, non-overlapping intervals.
struct IntervalRate {
  std::uint64_t perInterval;
  double intervalS;
  std::uint64_t count = 0, diffs = 0;
  double start = 0, sumSq = 0;
  bool started = false;
  void add(double phase) {
    if (!started) {
      start = phase;
      started = true;
      return;
    }
    if (++count == perInterval) {
      const double r = (phase - start) / intervalS;
      sumSq += r * r;
      ++diffs;
      start = phase;
      count = 0;
    }
  }
  double rms() const { return diffs ? std::sqrt(sumSq / static_cast<double>(diffs)) : 0.0; }
};
}  // namespace detail

/// Sampling interval of the modulator history used for the frequency
/// readout.
inline constexpr double kReadoutIntervalS = 1e-4;

/// Time-stepped run of the stabilization chain at the fast-loop cadence.
/// Deterministic for a given seed.  `sampleEvery` decimates the returned
/// time series (0 disables it).
inline StabilizationResult run_stabilization(double durationS, const NoiseModel& noise, const LoopConfig& loop,
                                             Stages stages, std::uint64_t seed, std::uint64_t sampleEvery = 0,
                                             double initialFreqOffsetHz = 0.0) {
  validate(noise);
  validate(loop);
  if (!(durationS > 0.0)) throw std::invalid_argument("run_stabilization: duration must be positive");
  const double dt = loop.fastIntervalUs * 1e-6;
  const auto steps = static_cast<std::uint64_t>(std::llround(durationS / dt));
  const auto perSlow = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(loop.fastRateHz / loop.slowRateHz)));
  const double slowDt = dt * static_cast<double>(perSlow);
  const auto perRateBlock = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(loop.rateWindowS / dt)));
  const auto blankSteps = static_cast<std::uint64_t>(std::llround(loop.fsBlankingS / dt));
  const bool fastOn = stages != Stages::kNone;
  const bool slowOn = stages == Stages::kFull;

  Rng rng(derive_seed(seed, stream::kServo));
  ChannelPhaseState st = initial_phase_state(noise, rng);
  st.freqOffsetHz = initialFreqOffsetHz;

  PidState fast, slow;
  const double dcMean = loop.dcTargetCountsHz * dt;
  const double refMean = loop.refCountsHz * dt;

  const auto perInterval = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(kDriftRateIntervalS / dt)));
  detail::IntervalRate freeRate{perInterval, dt * static_cast<double>(perInterval)};
  detail::BlockRate lockedRate{perRateBlock, dt * static_cast<double>(perRateBlock)};
  detail::RunningMoments resC, resQ;
  StabilizationResult out;

  // Decimated PM history for the frequency readout.  Offsets up to
  // 1 / (2 readoutDt) unwrap cleanly.
  const auto perReadout =
      std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(kReadoutIntervalS / dt)));
  const double readoutDt = dt * static_cast<double>(perReadout);
  std::vector<double> pmHistory;
  pmHistory.reserve(steps / perReadout + 1);

  double refExpected = 0.0;
  std::uint64_t blankUntil = 0, blanked = 0;
  for (std::uint64_t k = 0; k < steps; ++k) {
    const double shift = loop.aomPrecompensation ? aom_precompensation(st.tS, noise) : 0.0;
    st = phase_step(st, dt, noise, rng, shift);

    const double psiC = st.phiC + fast.unwrapped;
    const double lambda = dcMean * (1.0 + loop.dcVisibility * std::sin(psiC));
    const double counts = static_cast<double>(std::poisson_distribution<std::int64_t>(std::max(lambda, 0.0))(rng));
    if (fastOn) {
      resC.add(fringe_error(counts, dcMean, loop.dcVisibility));
      fast_loop_step(counts, loop, fast);
    }

    const double psiQ = st.phiQ + fast.unwrapped + slow.unwrapped;
    freeRate.add(st.phiQ);
    lockedRate.add(st.phiQ + fast.unwrapped);

    const bool inBlank = k < blankUntil;
    if (inBlank) ++blanked;
    if (slowOn && !inBlank) resQ.add(wrap_phase(psiQ));
    refExpected += refMean * (1.0 + loop.refVisibility * std::sin(psiQ));

    if ((k + 1) % perSlow == 0) {
      const double refCounts =
          static_cast<double>(std::poisson_distribution<std::int64_t>(std::max(refExpected, 0.0))(rng));
      refExpected = 0.0;
      if (slowOn && !inBlank) {
        slow_loop_step(refCounts / slowDt, loop, slow);
        // A reset moves the stretcher by whole fringes, so the fringe seen
        // through `unwrapped` is unchanged; only the blanking matters.
        if (slow.reset) {
          blankUntil = k + 1 + blankSteps;
          out.blanking.push_back({st.tS, st.tS + loop.fsBlankingS});
        }
      }
    }
    if ((k + 1) % perReadout == 0) pmHistory.push_back(fast.output);

    if (sampleEvery && k % sampleEvery == 0)
      out.series.push_back({st.tS, st.phiC, st.phiQ, fast.output, slow.output, counts});
  }

  StabilizationSummary& s = out.summary;
  s.fastCycles = steps;
  s.freeDriftStdRadPerS = freeRate.rms();
  s.fastLockedDriftStdRadPerS = lockedRate.rms();
  s.reductionFactor = s.fastLockedDriftStdRadPerS > 0 ? s.freeDriftStdRadPerS / s.fastLockedDriftStdRadPerS : 0.0;
  s.residualPhaseStdRadC = std::sqrt(resC.variance());
  s.residualPhaseStdRadQ = std::sqrt(resQ.variance());
  s.residualSkewnessQ = resQ.skewness();
  s.residualExcessKurtosisQ = resQ.excess_kurtosis();
  s.fsResets = slow.resets;
  s.fsSaturations = slow.saturations;
  s.blankedFraction = steps ? static_cast<double>(blanked) / static_cast<double>(steps) : 0.0;
  if (fastOn && pmHistory.size() >= 2)
    s.freqReadoutHz = -frequency_readout(pmHistory, readoutDt * static_cast<double>(pmHistory.size() - 1));
  return out;
}

/// Delimited text, one row per retained fast-loop sample.
inline void write_time_series(std::ostream& os, std::span<const StabilizationSample> series) {
  os << "t_s,phiC_rad,phiQ_rad,pm_rad,fs_rad,dc_counts\n";
  os.precision(10);
  for (const auto& r : series)
    os << r.tS << ',' << r.phiC << ',' << r.phiQ << ',' << r.pm << ',' << r.fs << ',' << r.dcCounts << '\n';
}

}  // namespace snstf
