// Independent reference computations used by the tests.  None of these
// call into the library's formulas.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

namespace oracle {

inline double binom(int n, int k) {
  double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline double factorial(int n) {
  double r = 1;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

/// Two coherent states |alpha>|beta e^{i delta}> on a lossless 50/50
/// splitter, expanded in the Fock basis up to `cutoff` photons per input
/// mode.  Output mode c gets (a + b)/sqrt2, d gets (a - b)/sqrt2.  Returns
/// the joint photon-number distribution P[p][q] of (c, d).
inline std::vector<std::vector<double>> splitter_fock(double muA, double muB, double delta, int cutoff = 20) {
  using cd = std::complex<double>;
  const int M = 2 * cutoff;
  std::vector<std::vector<cd>> amp(M + 1, std::vector<cd>(M + 1));
  const cd alpha = std::sqrt(muA);
  const cd beta = std::sqrt(muB) * std::exp(cd(0, delta));
  const double norm = std::exp(-0.5 * (muA + muB));
  for (int m = 0; m <= cutoff; ++m) {
    for (int k = 0; k <= cutoff; ++k) {
      // (a+)^m (b+)^k |0> / (m! k!) times alpha^m beta^k.
      const cd pre = norm * std::pow(alpha, m) * std::pow(beta, k) / (factorial(m) * factorial(k)) /
                     std::pow(std::sqrt(2.0), m + k);
      if (std::abs(pre) == 0.0) continue;
      for (int i = 0; i <= m; ++i) {
        for (int j = 0; j <= k; ++j) {
          const int p = i + j, q = (m - i) + (k - j);
          const double sign = ((k - j) % 2) ? -1.0 : 1.0;
          amp[p][q] += pre * binom(m, i) * binom(k, j) * sign * std::sqrt(factorial(p) * factorial(q));
        }
      }
    }
  }
  std::vector<std::vector<double>> prob(M + 1, std::vector<double>(M + 1));
  for (int p = 0; p <= M; ++p)
    for (int q = 0; q <= M; ++q) prob[p][q] = std::norm(amp[p][q]);
  return prob;
}

struct Clicks {
  double d0 = 0, d1 = 0, both = 0;
};

/// Threshold detectors behind the splitter: each photon survives with
/// efficiency eff, a dark count fires independently with probability pd.
inline Clicks threshold_clicks(const std::vector<std::vector<double>>& P, double eff0, double eff1, double pd0,
                               double pd1) {
  Clicks c;
  double none0 = 0, none1 = 0, noneBoth = 0;
  for (std::size_t p = 0; p < P.size(); ++p)
    for (std::size_t q = 0; q < P.size(); ++q) {
      const double s0 = std::pow(1 - eff0, static_cast<double>(p)) * (1 - pd0);
      const double s1 = std::pow(1 - eff1, static_cast<double>(q)) * (1 - pd1);
      none0 += P[p][q] * s0;
      none1 += P[p][q] * s1;
      noneBoth += P[p][q] * s0 * s1;
    }
  c.d0 = 1 - none0;
  c.d1 = 1 - none1;
  c.both = 1 - none0 - none1 + noneBoth;
  return c;
}

struct PairingAverage {
  double pairs = 0, survivors = 0, errors = 0;
};

/// Average of the pairing outcome over every injective assignment of the
/// smaller of Bob's 0/1 position sets into the larger one.
inline PairingAverage exhaustive_pairing(const std::vector<std::uint8_t>& alice, const std::vector<std::uint8_t>& bob) {
  std::vector<std::size_t> zeros, ones;
  for (std::size_t i = 0; i < bob.size(); ++i) (bob[i] ? ones : zeros).push_back(i);
  const bool zerosSmall = zeros.size() <= ones.size();
  const auto& small = zerosSmall ? zeros : ones;
  const auto& large = zerosSmall ? ones : zeros;
  PairingAverage acc;
  acc.pairs = static_cast<double>(small.size());
  double total = 0;
  std::vector<bool> used(large.size(), false);
  std::vector<std::size_t> pick(small.size());
  // Depth-first enumeration of injections small -> large.
  auto rec = [&](auto&& self, std::size_t depth) -> void {
    if (depth == small.size()) {
      total += 1;
      for (std::size_t k = 0; k < small.size(); ++k) {
        const std::size_t z = zerosSmall ? small[k] : large[pick[k]];
        const std::size_t o = zerosSmall ? large[pick[k]] : small[k];
        if (alice[z] == alice[o]) continue;
        acc.survivors += 1;
        if (alice[z] != bob[z]) acc.errors += 1;
      }
      return;
    }
    for (std::size_t j = 0; j < large.size(); ++j) {
      if (used[j]) continue;
      used[j] = true;
      pick[depth] = j;
      self(self, depth + 1);
      used[j] = false;
    }
  };
  rec(rec, 0);
  acc.survivors /= total;
  acc.errors /= total;
  return acc;
}

/// Channel seen by one window, in the measurement model: arm
/// transmittances, detector efficiencies, dark-count probabilities and
/// fringe visibility.
struct Channel {
  double tA, tB, e0, e1, pd0, pd1, V, sigma;
};

/// Probability of a single click when one photon leaves one user and the
/// other sends vacuum.
inline double single_photon_yield(const Channel& c, double t) {
  const double p0 = t * c.e0 / 2, p1 = t * c.e1 / 2;
  return p0 * (1 - c.pd1) + p1 * (1 - c.pd0) + (1 - p0 - p1) * (c.pd0 * (1 - c.pd1) + c.pd1 * (1 - c.pd0));
}

/// Phase-error rate of the one-photon part of two phase-randomized but
/// slice-matched pulses of intensities muA, muB: the photon is in the
/// superposition sqrt(muA)|10> + e^{i d} sqrt(muB)|01>.  Averaged over
/// relative phase 0 and pi, and over a Gaussian residual phase.
inline double single_photon_phase_error(const Channel& c, double muA, double muB) {
  const int n = 4000;
  const double lim = 8 * c.sigma;
  double yield = 0, err = 0, wsum = 0;
  for (int k = 0; k <= (c.sigma > 0 ? n : 0); ++k) {
    const double x = c.sigma > 0 ? -lim + 2 * lim * k / n : 0.0;
    const double w = c.sigma > 0 ? std::exp(-0.5 * x * x / (c.sigma * c.sigma)) * ((k == 0 || k == n) ? 0.5 : 1.0) : 1.0;
    for (int opposite = 0; opposite < 2; ++opposite) {
      const double delta = x + (opposite ? std::numbers::pi : 0.0);
      const double a = c.tA * muA, b = c.tB * muB;
      // Port probabilities of the photon, normalized to the photon.
      const double m0 = (0.5 * (a + b) + c.V * std::sqrt(a * b) * std::cos(delta)) / (muA + muB);
      const double m1 = (0.5 * (a + b) - c.V * std::sqrt(a * b) * std::cos(delta)) / (muA + muB);
      const double q0 = m0 * c.e0, q1 = m1 * c.e1;
      const double only0 = q0 * (1 - c.pd1) + (1 - q0 - q1) * c.pd0 * (1 - c.pd1);
      const double only1 = q1 * (1 - c.pd0) + (1 - q0 - q1) * c.pd1 * (1 - c.pd0);
      yield += w * (only0 + only1);
      err += w * (opposite ? only0 : only1);
    }
    wsum += w;
  }
  return err / yield;
}

}  // namespace oracle
