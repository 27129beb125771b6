// Key-rate kernel for sending-or-not-sending twin-field QKD.
//
// Everything in this header is a pure function of its arguments.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace snstf {

/// One user's source settings.  The Z (signal) window sends muZ with
/// probability epsilonSend and the weak mu0 state otherwise; decoy windows
/// pick mu0/mu1/mu2 with pMu0/pMu1/pMu2.
struct PartySettings {
  double muZ = 0.493;
  double mu2 = 0.493;
  double mu1 = 0.090;
  double mu0 = 0.0002;
  double pSignalWindow = 0.735;
  double epsilonSend = 0.269;
  double pMu0 = 0.078;
  double pMu1 = 0.606;
  double pMu2 = 0.316;

  bool operator==(const PartySettings&) const = default;
};

enum class RateMode { kAsymptotic, kFinite };

inline const char* to_string(RateMode m) {
  return m == RateMode::kFinite ? "finite" : "asymptotic";
}

inline RateMode parse_rate_mode(const std::string& s) {
  if (s == "finite") return RateMode::kFinite;
  if (s == "asymptotic") return RateMode::kAsymptotic;
  throw std::invalid_argument("unknown rate mode '" + s + "'");
}

/// Error-correction efficiency and composable failure probabilities.
/// epsPE is the parameter-estimation budget shared by the Chernoff bounds
/// in finite mode.
struct SecuritySettings {
  double f = 1.1;
  double epsCor = 1e-10;
  double epsPA = 1e-10;
  double epsHat = 1e-10;
  double epsPE = 1e-10;
  RateMode mode = RateMode::kFinite;

  bool operator==(const SecuritySettings&) const = default;
};

/// Quantities after odd-parity pairing that enter the final key formula.
struct KeyRateInputs {
  double N = 0;          // sent windows
  double n1Prime = 0;    // untagged bits after pairing
  double e1PhPrime = 0;  // phase-flip rate of those bits
  double ntPrime = 0;    // all bits remaining after pairing
  double EPrime = 0;     // bit-flip rate of remaining bits
};

inline bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

/// Throws std::invalid_argument naming the first violated invariant.
inline void validate(const PartySettings& s, const std::string& who = "party") {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument(who + ": " + what);
  };
  if (!(s.muZ > 0.0)) fail("muZ must be > 0");
  if (!(s.mu0 >= 0.0 && s.mu0 < s.mu1 && s.mu1 < s.mu2))
    fail("intensities must satisfy 0 <= mu0 < mu1 < mu2");
  for (double p : {s.pSignalWindow, s.epsilonSend, s.pMu0, s.pMu1, s.pMu2})
    if (!is_probability(p)) fail("probabilities must lie in [0,1]");
  if (std::abs(s.pMu0 + s.pMu1 + s.pMu2 - 1.0) > 1e-9)
    fail("pMu0 + pMu1 + pMu2 must equal 1");
}

inline void validate(const SecuritySettings& s) {
  if (!(s.f >= 1.0)) throw std::invalid_argument("security: f must be >= 1");
  for (double e : {s.epsCor, s.epsPA, s.epsHat, s.epsPE})
    if (!(e > 0.0 && e < 1.0))
      throw std::invalid_argument("security: failure probabilities must lie in (0,1)");
}

inline void validate(const KeyRateInputs& in) {
  if (!(in.e1PhPrime >= 0.0 && in.e1PhPrime <= 0.5))
    throw std::invalid_argument("key rate: e1PhPrime outside [0, 0.5]");
  if (!(in.EPrime >= 0.0 && in.EPrime <= 0.5))
    throw std::invalid_argument("key rate: EPrime outside [0, 0.5]");
  if (!(in.n1Prime >= 0.0 && in.n1Prime <= in.ntPrime && in.ntPrime <= in.N))
    throw std::invalid_argument("key rate: need 0 <= n1Prime <= ntPrime <= N");
}

/// Shannon binary entropy in bits, continuous at 0 and 1.
inline double binary_entropy(double x) {
  if (!(x >= 0.0 && x <= 1.0))
    throw std::domain_error("binary_entropy: argument outside [0,1]");
  if (x == 0.0 || x == 1.0) return 0.0;
  return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

/// Bits charged for error-correction verification and privacy
/// amplification; zero in asymptotic mode.
inline double finite_key_penalty_bits(const SecuritySettings& sec) {
  if (sec.mode == RateMode::kAsymptotic) return 0.0;
  return 2.0 * std::log2(2.0 / sec.epsCor) +
         2.0 * std::log2(1.0 / (std::sqrt(2.0) * sec.epsPA * sec.epsHat));
}

/// Secure bits per sent window before clamping.  May be negative.
inline double key_rate_unclamped(const KeyRateInputs& in, const SecuritySettings& sec) {
  validate(in);
  validate(sec);
  if (in.N <= 0.0) return 0.0;
  const double privacy = in.n1Prime * (1.0 - binary_entropy(in.e1PhPrime));
  const double leaked = sec.f * in.ntPrime * binary_entropy(in.EPrime);
  return (privacy - leaked - finite_key_penalty_bits(sec)) / in.N;
}

/// Secure bits per sent window; "no key" is reported as 0, never negative.
inline double key_rate(const KeyRateInputs& in, const SecuritySettings& sec) {
  if (in.n1Prime <= 0.0) {
    validate(in);
    return 0.0;
  }
  const double r = key_rate_unclamped(in, sec);
  return r > 0.0 ? r : 0.0;
}

inline constexpr double kDefaultClockHz = 5.0e8;

inline double rate_per_second(double bitsPerSignal, double clockHz = kDefaultClockHz) {
  if (!(clockHz > 0.0)) throw std::invalid_argument("clock must be positive");
  return bitsPerSignal * clockHz;
}

inline double db_to_transmittance(double lossDb) { return std::pow(10.0, -lossDb / 10.0); }

/// Repeaterless secret-key capacity -log2(1 - eta) of a pure-loss channel.
inline double plob_bound(double totalLossDb) {
  if (!(totalLossDb >= 0.0)) throw std::invalid_argument("plob_bound: loss must be >= 0");
  const double eta = db_to_transmittance(totalLossDb);
  return -std::log1p(-eta) / std::log(2.0);
}

/// Relative deviation of mu1 ratio from the intensity-balance condition
///   mu1_a / mu1_b = eps_a (1-eps_b) muZ_a e^{-muZ_a} / (eps_b (1-eps_a) muZ_b e^{-muZ_b}).
inline double check_sns_constraint(const PartySettings& a, const PartySettings& b) {
  if (b.mu1 == 0.0) throw std::domain_error("check_sns_constraint: mu1 of party b is zero");
  const double num = a.epsilonSend * (1.0 - b.epsilonSend) * a.muZ * std::exp(-a.muZ);
  const double den = b.epsilonSend * (1.0 - a.epsilonSend) * b.muZ * std::exp(-b.muZ);
  if (den == 0.0 || num == 0.0)
    throw std::domain_error("check_sns_constraint: right-hand side is zero or undefined");
  const double rhs = num / den;
  const double lhs = a.mu1 / b.mu1;
  return std::abs(lhs - rhs) / rhs;
}

/// mu1 of party b that satisfies the balance condition exactly for the
/// rest of the settings.
inline double balanced_mu1_b(const PartySettings& a, const PartySettings& b) {
  const double num = a.epsilonSend * (1.0 - b.epsilonSend) * a.muZ * std::exp(-a.muZ);
  const double den = b.epsilonSend * (1.0 - a.epsilonSend) * b.muZ * std::exp(-b.muZ);
  if (num == 0.0 || den == 0.0)
    throw std::domain_error("balanced_mu1_b: right-hand side is zero or undefined");
  return a.mu1 * den / num;
}

/// X-basis error floor from a Gaussian residual phase of std sigma and
/// fringe visibility V: E[(1 - V cos d)/2] with d ~ N(0, sigma^2).
inline double phase_misalignment_qber(double sigmaRad, double visibility) {
  if (!(sigmaRad >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
  if (!is_probability(visibility)) throw std::invalid_argument("visibility must lie in [0,1]");
  return 0.5 * (1.0 - visibility * std::exp(-0.5 * sigmaRad * sigmaRad));
}

}  // namespace snstf
