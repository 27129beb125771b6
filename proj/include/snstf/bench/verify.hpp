// Built-in identity suite: closed-form values that the kernel must
// reproduce exactly or within a stated tolerance.
#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "snstf/optics.hpp"
#include "snstf/postproc.hpp"
#include "snstf/ratecore.hpp"

namespace snstf {

/// The functions under test.  Defaults are the library's; tests swap one
/// out to check that the suite notices.
struct VerifyKernel {
  std::function<double(double)> plob = plob_bound;
  std::function<double(double)> aoppMap = aopp_phase_error;
  std::function<double(const PartySettings&, const PartySettings&)> snsDeviation = check_sns_constraint;
  std::function<double(double, double)> phaseQber = phase_misalignment_qber;
  std::function<double(const NoiseModel&)> clockFloor = clock_floor_rate;
  std::function<double(const NoiseModel&)> bandReduction = dual_band_reduction_factor;
  std::function<double(double, double)> perSecond = rate_per_second;
};

struct IdentityCheck {
  std::string name;
  double value = 0;
  double expected = 0;
  double tolerance = 0;  // absolute
  bool pass = false;
};

struct VerifyReport {
  std::vector<IdentityCheck> checks;
  bool passed() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return !checks.empty();
  }
};

inline VerifyReport verify(const VerifyKernel& k = {}) {
  VerifyReport r;
  auto check = [&](std::string name, double value, double expected, double tol) {
    const bool ok = std::isfinite(value) && std::abs(value - expected) <= tol;
    r.checks.push_back({std::move(name), value, expected, tol, ok});
  };
  auto rel = [&](std::string name, double value, double expected, double relTol) {
    check(std::move(name), value, expected, std::abs(expected) * relTol);
  };

  rel("skc0_546km", k.plob(100.13), 1.400e-10, 0.005);
  rel("skc0_603km", k.plob(108.59), 1.996e-11, 0.005);
  rel("skc0_452km", k.plob(84.62), 4.979e-9, 0.005);

  // Inputs are themselves rounded to four digits, so agreement means a
  // difference below one unit in the fourth significant digit.
  check("aopp_map_546km", k.aoppMap(0.1128), 0.2001, 1e-4);
  check("aopp_map_603km", k.aoppMap(0.0790), 0.1455, 1e-4);
  check("aopp_map_452km", k.aoppMap(0.0994), 0.1790, 1e-4);

  PartySettings sym;
  check("balance_symmetric", k.snsDeviation(sym, sym), 0.0, 0.0);
  PartySettings a = sym, b = sym;
  a.muZ = 0.493, a.mu2 = 0.493, a.mu1 = 0.113, a.epsilonSend = 0.405;
  b.muZ = 0.247, b.mu2 = 0.077, b.mu1 = 0.018, b.epsilonSend = 0.141;
  check("balance_asymmetric", k.snsDeviation(a, b), 0.025, 0.025);

  check("phase_qber_0.20rad", k.phaseQber(0.20, 1.0), 0.0099, 0.0005);
  check("phase_qber_visibility", k.phaseQber(0.0, 0.9795), 0.01025, 1e-6);

  NoiseModel n;
  n.clockAccuracy = 5e-11;
  n.combSpanGHz = 100.0;
  check("clock_floor_rad_per_s", k.clockFloor(n), 44.4, 0.5);
  check("clock_floor_hz", k.clockFloor(n) / (2 * std::numbers::pi), 7.1, 0.05);
  check("dual_band_factor", k.bandReduction(n), 1934.7, 0.1);

  check("skr_per_second_546km", k.perSecond(1.060e-9, kDefaultClockHz), 0.53, 0.005);
  check("skr_per_second_603km", k.perSecond(2.455e-10, kDefaultClockHz), 0.12, 0.005);
  return r;
}

inline void write_verify(std::ostream& os, const VerifyReport& r) {
  os.precision(6);
  for (const auto& c : r.checks)
    os << (c.pass ? "PASS " : "FAIL ") << c.name << ": value=" << c.value << " expected=" << c.expected
       << " tolerance=" << c.tolerance << '\n';
  os << (r.passed() ? "verify: all identities hold\n" : "verify: FAILED\n");
}

}  // namespace snstf
