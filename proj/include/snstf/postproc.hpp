// Post-processing: sifting, odd-parity pairing, decoy-state bounds,
// statistical fluctuation and the final key rate.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "snstf/counts.hpp"
#include "snstf/engine.hpp"
#include "snstf/ratecore.hpp"

namespace snstf {

// ---------------------------------------------------------------- sifting

struct ZLabel {
  std::uint8_t alice;  // intensity digit, 0 or 3
  std::uint8_t bob;
};

struct XMatchedEvent {
  std::uint64_t windowIndex;
  Intensity label;
  bool opposite;  // slice difference of half a turn
  Detector detector;
  bool error;
};

struct SiftResult {
  std::vector<std::uint8_t> aliceZ, bobZ;
  std::vector<ZLabel> zLabels;
  std::vector<XMatchedEvent> xMatched;
  CountsTable counts;
};

/// Joins Charlie's announcements with each user's own log.  The counts
/// are rebuilt from the logs and must equal the ones stored in the record.
inline SiftResult sift(const SessionRecord& r) {
  const auto& ann = r.announcements;
  if (r.aliceLog.size() != ann.size() || r.bobLog.size() != ann.size())
    throw std::runtime_error("sift: logs and announcements differ in length");
  SiftResult out;
  for (std::size_t k = 0; k < ann.size(); ++k) {
    const LoggedChoice& la = r.aliceLog[k];
    const LoggedChoice& lb = r.bobLog[k];
    if (la.windowIndex != ann[k].windowIndex || lb.windowIndex != ann[k].windowIndex)
      throw std::runtime_error("sift: log entry does not match announced window");
    const WindowChoice& a = la.choice;
    const WindowChoice& b = lb.choice;
    tally(out.counts, a, b, ann[k].detector);
    if (a.kind == WindowKind::kSignal && b.kind == WindowKind::kSignal) {
      out.aliceZ.push_back(static_cast<std::uint8_t>(a.zBit));
      out.bobZ.push_back(static_cast<std::uint8_t>(b.zBit));
      out.zLabels.push_back({static_cast<std::uint8_t>(a.digit()), static_cast<std::uint8_t>(b.digit())});
    } else if (a.kind == WindowKind::kDecoy && b.kind == WindowKind::kDecoy && a.label == b.label &&
               a.label != Intensity::kMu0) {
      const int diff = ((a.phaseSlice - b.phaseSlice) % kPhaseSlices + kPhaseSlices) % kPhaseSlices;
      if (diff == 0 || diff == kPhaseSlices / 2) {
        const bool opposite = diff != 0;
        // Bob flips his bit for opposite slices and for a D1 click.
        const bool flip = opposite != (ann[k].detector == Detector::kD1);
        out.xMatched.push_back({ann[k].windowIndex, a.label, opposite, ann[k].detector, flip});
      }
    }
  }
  if (!(out.counts == r.counts)) throw std::runtime_error("sift: counts table does not match the event logs");
  return out;
}

// ---------------------------------------------------------------- AOPP

/// e' = 2 e (1 - e): a surviving pair is a phase error when exactly one of
/// its two bits is.
inline double aopp_phase_error(double e1Ph) {
  if (!(e1Ph >= 0.0 && e1Ph <= 0.5)) throw std::domain_error("aopp_phase_error: rate outside [0, 0.5]");
  return 2.0 * e1Ph * (1.0 - e1Ph);
}

struct AoppPairing {
  std::uint64_t pairs = 0;
  std::uint64_t survivors = 0;
  std::uint64_t errors = 0;
  std::vector<std::uint8_t> aliceOut, bobOut;
  double error_rate() const { return survivors ? static_cast<double>(errors) / static_cast<double>(survivors) : 0.0; }
};

// Fisher-Yates on our own generator, so pairings are the same with every
// standard library.
inline void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

/// Bob pairs each of his 0 bits with a distinct 1 bit at random; Alice
/// keeps a pair when her two bits have odd parity.  Both emit the bit at
/// the pair's first (Bob-0) position.
inline AoppPairing aopp_pair(const std::vector<std::uint8_t>& alice, const std::vector<std::uint8_t>& bob, Rng& rng) {
  if (alice.size() != bob.size()) throw std::invalid_argument("aopp_pair: strings differ in length");
  std::vector<std::size_t> zeros, ones;
  for (std::size_t i = 0; i < bob.size(); ++i) (bob[i] ? ones : zeros).push_back(i);
  shuffle(zeros, rng);
  shuffle(ones, rng);
  AoppPairing out;
  out.pairs = std::min(zeros.size(), ones.size());
  for (std::size_t k = 0; k < out.pairs; ++k) {
    const std::size_t i = zeros[k], j = ones[k];
    if ((alice[i] ^ alice[j]) == 0) continue;
    ++out.survivors;
    out.aliceOut.push_back(alice[i]);
    out.bobOut.push_back(bob[i]);
    out.errors += alice[i] != bob[i] ? 1 : 0;
  }
  return out;
}

/// Expected survivors and errors under random pairing, from the Z-basis
/// categories: c0 (c1) is the share of Bob's 0 (1) bits that agree with
/// Alice.  Exact by linearity of expectation over pairings.
struct AoppExpectation {
  double pairs = 0, survivors = 0, errors = 0;
  double error_rate() const { return survivors > 0 ? errors / survivors : 0.0; }
};

inline AoppExpectation aopp_expected(double zz03, double zz33, double zz30, double zz00) {
  AoppExpectation e;
  const double nB0 = zz03 + zz33, nB1 = zz30 + zz00;
  e.pairs = std::min(nB0, nB1);
  if (e.pairs <= 0) return e;
  const double c0 = zz03 / nB0, c1 = zz30 / nB1;
  e.survivors = e.pairs * (c0 * c1 + (1 - c0) * (1 - c1));
  e.errors = e.pairs * (1 - c0) * (1 - c1);
  return e;
}

template <class T>
AoppExpectation aopp_expected(const BasicCountsTable<T>& c) {
  auto zz = [&](int a, int b) { return static_cast<double>(c.at(Basis::kZ, Basis::kZ, a, b)); };
  return aopp_expected(zz(0, 3), zz(3, 3), zz(3, 0), zz(0, 0));
}

// ---------------------------------------------------------- fluctuations

enum class Direction { kUpper, kLower };

/// Multiplicative Chernoff bound on the mean of a Poisson-like count given
/// the observation.  Upper: the largest mu with
/// exp(-mu) (e mu / x)^x >= eps; lower: the smallest.
inline double chernoff_interval(double observed, double epsilon, Direction dir) {
  if (!(observed >= 0.0)) throw std::invalid_argument("chernoff_interval: observed must be >= 0");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("chernoff_interval: epsilon outside (0,1)");
  const double L = -std::log(epsilon);
  const double x = observed;
  auto g = [&](double mu) { return mu - x - (x > 0 ? x * std::log(mu / x) : 0.0) - L; };
  boost::math::tools::eps_tolerance<double> tol(50);
  std::uintmax_t iters = 200;
  if (dir == Direction::kUpper) {
    if (x == 0.0) return L;
    double hi = x + 2.0 * std::sqrt(x * L) + 2.0 * L + 1.0;
    while (g(hi) < 0) hi *= 2.0;
    const auto r = boost::math::tools::toms748_solve(g, x, hi, -L, g(hi), tol, iters);
    return 0.5 * (r.first + r.second);
  }
  if (x == 0.0) return 0.0;
  const double lo = x * std::exp(-L / x - 1.0);
  if (lo <= 1e-300) return 0.0;
  const auto r = boost::math::tools::toms748_solve(g, lo, x, g(lo), -L, tol, iters);
  return 0.5 * (r.first + r.second);
}

// ---------------------------------------------------------------- decoy

struct DecoyEstimates {
  double n1 = 0;
  double n1A = 0, n1B = 0;    // untagged bits in ZZ_30 and ZZ_03
  double s1A = 0, s1B = 0;    // single-photon yields, lower bounds
  double e1Ph = 0.5;          // upper bound
  RateMode mode = RateMode::kAsymptotic;
  int boundCount = 0;         // Chernoff applications
  double epsPerBound = 0.0;
  bool clampedA = false, clampedB = false;
  bool e1Clamped = false;
};

/// Three-intensity lower bound on the single-photon yield from yields at
/// nu0 < nu1 < nu2; nu0 may be nonzero.
inline double single_photon_yield_lower(double nu0, double nu1, double nu2, double q0, double q1, double q2) {
  const double num = (nu2 * nu2 - nu0 * nu0) * std::exp(nu1) * q1 - (nu1 * nu1 - nu0 * nu0) * std::exp(nu2) * q2 -
                     (nu2 * nu2 - nu1 * nu1) * std::exp(nu0) * q0;
  return num / ((nu1 - nu0) * (nu2 - nu0) * (nu2 - nu1));
}

namespace detail {
// Count -> count bound, or the count itself in asymptotic mode.
struct Bounder {
  RateMode mode;
  double eps;
  int uses = 0;
  double operator()(double count, Direction d) {
    ++uses;
    if (mode == RateMode::kAsymptotic) return count;
    return chernoff_interval(count, eps, d);
  }
};
}  // namespace detail

inline constexpr int kDecoyBoundCount = 8;

/// n1 and e1Ph from a counts table.  Each user's single-photon yield uses
/// the windows where the other user sent a Z-window vacuum (XZ_k0 for
/// Alice, ZX_0k for Bob).  The phase error uses slice-matched (mu1, mu1)
/// windows after removing the vacuum share, whose error rate is one half.
template <class T>
DecoyEstimates decoy_bounds(const BasicCountsTable<T>& c, const PartySettings& a, const PartySettings& b, double N,
                            RateMode mode = RateMode::kAsymptotic, double epsPE = 1e-10) {
  validate(a, "alice");
  validate(b, "bob");
  DecoyEstimates d;
  d.mode = mode;
  d.epsPerBound = mode == RateMode::kFinite ? epsPE / kDecoyBoundCount : 0.0;
  if (!(N > 0)) return d;
  detail::Bounder bound{mode, d.epsPerBound};
  auto cnt = [&](Basis x, Basis y, int la, int lb) { return static_cast<double>(c.at(x, y, la, lb)); };

  const double pA = a.pSignalWindow, pB = b.pSignalWindow;
  const double vacA = pA * (1 - a.epsilonSend), vacB = pB * (1 - b.epsilonSend);
  const double pMuA[3] = {a.pMu0, a.pMu1, a.pMu2}, pMuB[3] = {b.pMu0, b.pMu1, b.pMu2};

  auto side = [&](const PartySettings& s, const double* pMu, double pOther, bool alice, bool& clamped) {
    double q[3];
    const Direction dir[3] = {Direction::kUpper, Direction::kLower, Direction::kUpper};
    for (int k = 0; k < 3; ++k) {
      const double n = alice ? cnt(Basis::kX, Basis::kZ, k, 0) : cnt(Basis::kZ, Basis::kX, 0, k);
      const double windows = N * (1 - s.pSignalWindow) * pMu[k] * pOther;
      q[k] = windows > 0 ? bound(n, dir[k]) / windows : 0.0;
    }
    const double y = single_photon_yield_lower(s.mu0, s.mu1, s.mu2, q[0], q[1], q[2]);
    clamped = !(y > 0.0);
    return clamped ? 0.0 : std::min(y, 1.0);
  };
  d.s1A = side(a, pMuA, vacB, true, d.clampedA);
  d.s1B = side(b, pMuB, vacA, false, d.clampedB);

  d.n1A = N * pA * a.epsilonSend * vacB * a.muZ * std::exp(-a.muZ) * d.s1A;
  d.n1B = N * pB * b.epsilonSend * vacA * b.muZ * std::exp(-b.muZ) * d.s1B;
  d.n1 = d.n1A + d.n1B;

  // Both users at the weakest intensity, pooled over every basis pairing.
  const double w00 = N * ((1 - pA) * a.pMu0 + vacA) * ((1 - pB) * b.pMu0 + vacB);
  const double n00 = cnt(Basis::kX, Basis::kX, 0, 0) + cnt(Basis::kX, Basis::kZ, 0, 0) +
                     cnt(Basis::kZ, Basis::kX, 0, 0) + cnt(Basis::kZ, Basis::kZ, 0, 0);
  const double s00 = w00 > 0 ? bound(n00, Direction::kLower) / w00 : 0.0;

  const double matched = N * (1 - pA) * a.pMu1 * (1 - pB) * b.pMu1 * (2.0 / kPhaseSlices);
  const double te = matched > 0 ? bound(static_cast<double>(c.x11Errors), Direction::kUpper) / matched : 0.0;
  const double p0 = std::exp(-a.mu1 - b.mu1);
  const double single = p0 * (a.mu1 * d.s1A + b.mu1 * d.s1B);
  d.boundCount = bound.uses;
  if (single > 0) {
    const double e = (te - 0.5 * p0 * s00) / single;
    d.e1Clamped = !(e <= 0.5);
    d.e1Ph = std::clamp(e, 0.0, 0.5);
  } else {
    d.e1Ph = 0.5;
    d.e1Clamped = true;
  }
  return d;
}

template <class T>
DecoyEstimates decoy_bounds_asymptotic(const BasicCountsTable<T>& c, const PartySettings& a, const PartySettings& b,
                                       double N) {
  return decoy_bounds(c, a, b, N, RateMode::kAsymptotic);
}

// ---------------------------------------------------------------- report

struct AoppResult {
  double n1Prime = 0;
  double ntPrime = 0;
  double EPrime = 0;
  double e1PhPrime = 0;
  double pairCount = 0;
  double survivingPairCount = 0;
};

/// Untagged bits after pairing: a pair is untagged when both of its bits
/// are.  Bob's 0 bits come from ZZ_03 and ZZ_33, his 1 bits from ZZ_30 and
/// ZZ_00; the untagged ones sit in ZZ_03 (n1B) and ZZ_30 (n1A).
template <class T>
AoppResult aopp_result(const BasicCountsTable<T>& c, const DecoyEstimates& d, double pairs, double survivors,
                       double errors) {
  AoppResult r;
  auto zz = [&](int a, int b) { return static_cast<double>(c.at(Basis::kZ, Basis::kZ, a, b)); };
  const double nB0 = zz(0, 3) + zz(3, 3), nB1 = zz(3, 0) + zz(0, 0);
  r.pairCount = pairs;
  r.survivingPairCount = survivors;
  r.ntPrime = survivors;
  r.EPrime = survivors > 0 ? errors / survivors : 0.0;
  if (nB0 > 0 && nB1 > 0) r.n1Prime = pairs * std::min(1.0, d.n1B / nB0) * std::min(1.0, d.n1A / nB1);
  r.n1Prime = std::min(r.n1Prime, r.ntPrime);
  r.e1PhPrime = aopp_phase_error(d.e1Ph);
  return r;
}

struct KeyRateReport {
  double N = 0;
  RateMode mode = RateMode::kAsymptotic;
  DecoyEstimates decoy;
  AoppResult aopp;
  double ezBefore = 0;
  double qberX11 = 0, qberX22 = 0;
  double skr = 0;            // bit per window, clamped
  double skrUnclamped = 0;
  double skrPerSecond = 0;
  double totalLossDb = 0;
  double skc0 = 0;
  double ratio = 0;
  double epsTotal = 0;
};

/// Final key formula on the pairing output.  Error-correction leakage uses the
/// observed post-pairing error rate.
template <class T>
KeyRateReport finalize(const BasicCountsTable<T>& c, const DecoyEstimates& d, const AoppResult& ap,
                       const SecuritySettings& sec, double N, double totalLossDb, double clockHz = kDefaultClockHz) {
  validate(sec);
  KeyRateReport r;
  r.N = N;
  r.mode = sec.mode;
  r.decoy = d;
  r.aopp = ap;
  r.ezBefore = c.qber_z();
  r.qberX11 = c.qber_x11();
  r.qberX22 = c.qber_x22();
  r.epsTotal = sec.mode == RateMode::kFinite ? d.epsPerBound * d.boundCount : 0.0;
  if (N > 0 && ap.n1Prime > 0) {
    KeyRateInputs in{N, ap.n1Prime, ap.e1PhPrime, ap.ntPrime, std::min(ap.EPrime, 0.5)};
    r.skrUnclamped = key_rate_unclamped(in, sec);
    r.skr = std::max(0.0, r.skrUnclamped);
  }
  r.skrPerSecond = rate_per_second(r.skr, clockHz);
  r.totalLossDb = totalLossDb;
  r.skc0 = plob_bound(totalLossDb);
  r.ratio = r.skc0 > 0 ? r.skr / r.skc0 : 0.0;
  return r;
}

/// Whole chain on expected (or any) counts with the pairing taken in
/// expectation.
template <class T>
KeyRateReport analyze_counts(const BasicCountsTable<T>& c, const PartySettings& a, const PartySettings& b,
                             const SecuritySettings& sec, double N, double totalLossDb) {
  const DecoyEstimates d = decoy_bounds(c, a, b, N, sec.mode, sec.epsPE);
  const AoppExpectation e = aopp_expected(c);
  return finalize(c, d, aopp_result(c, d, e.pairs, e.survivors, e.errors), sec, N, totalLossDb);
}

/// Whole chain on a simulated session: sifting, a real pairing run on the
/// Z strings, then the same estimates.
struct SessionAnalysis {
  SiftResult sifted;
  AoppPairing pairing;
  KeyRateReport report;
};

inline SessionAnalysis analyze_session(const SessionRecord& rec, const PartySettings& a, const PartySettings& b,
                                       const SecuritySettings& sec, double totalLossDb) {
  SessionAnalysis s;
  s.sifted = sift(rec);
  Rng rng(derive_seed(rec.seed, stream::kPairing));
  s.pairing = aopp_pair(s.sifted.aliceZ, s.sifted.bobZ, rng);
  const double N = static_cast<double>(rec.N);
  const DecoyEstimates d = decoy_bounds(s.sifted.counts, a, b, N, sec.mode, sec.epsPE);
  const AoppResult ap = aopp_result(s.sifted.counts, d, static_cast<double>(s.pairing.pairs),
                                    static_cast<double>(s.pairing.survivors), static_cast<double>(s.pairing.errors));
  s.report = finalize(s.sifted.counts, d, ap, sec, N, totalLossDb);
  return s;
}

inline void write_report(std::ostream& os, const KeyRateReport& r) {
  const auto& d = r.decoy;
  const auto& ap = r.aopp;
  os << "[key_rate]\n"
     << "mode = " << to_string(r.mode) << '\n'
     << "N = " << r.N << '\n'
     << "QBER (X_11) = " << r.qberX11 << '\n'
     << "QBER (X_22) = " << r.qberX22 << '\n'
     << "QBER (E_z before AOPP) = " << r.ezBefore << '\n'
     << "QBER (E_z after AOPP) = " << ap.EPrime << '\n'
     << "n_1 (Before AOPP) = " << d.n1 << '\n'
     << "n_1 (After AOPP) = " << ap.n1Prime << '\n'
     << "e_1^ph (Before AOPP) = " << d.e1Ph << '\n'
     << "e_1^ph (After AOPP) = " << ap.e1PhPrime << '\n'
     << "s1_alice = " << d.s1A << '\n'
     << "s1_bob = " << d.s1B << '\n'
     << "pairs = " << ap.pairCount << '\n'
     << "surviving_pairs = " << ap.survivingPairCount << '\n'
     << "n_t (After AOPP) = " << ap.ntPrime << '\n'
     << "SKR (bit/signal) = " << r.skr << '\n'
     << "SKR unclamped (bit/signal) = " << r.skrUnclamped << '\n'
     << "SKR (bit/s) = " << r.skrPerSecond << '\n'
     << "total_loss_db = " << r.totalLossDb << '\n'
     << "SKC_0 (bit/signal) = " << r.skc0 << '\n'
     << "Ratio SKR over SKC_0 = " << r.ratio << '\n'
     << "chernoff_bounds = " << d.boundCount << '\n'
     << "epsilon_per_bound = " << d.epsPerBound << '\n'
     << "epsilon_total = " << r.epsTotal << '\n';
  if (d.clampedA || d.clampedB || d.e1Clamped)
    os << "diagnostic = " << (d.clampedA ? "alice yield clamped; " : "") << (d.clampedB ? "bob yield clamped; " : "")
       << (d.e1Clamped ? "phase error clamped" : "") << '\n';
}

}  // namespace snstf
