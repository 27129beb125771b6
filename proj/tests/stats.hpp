// Count comparisons against Poisson expectations.
#pragma once

#include <boost/math/distributions/poisson.hpp>

#include <string>
#include <vector>

#include "snstf/counts.hpp"

namespace stats {

/// Two-sided tail mass of a 4 sigma normal interval.
inline constexpr double kFourSigmaTail = 6.334e-5;

/// Central Poisson interval holding all but `tail` of the mass.
inline bool within_poisson(double observed, double mean, double tail = kFourSigmaTail) {
  if (mean <= 0) return observed == 0;
  boost::math::poisson_distribution<double> p(mean);
  const double lo = boost::math::quantile(p, tail / 2);
  const double hi = boost::math::quantile(boost::math::complement(p, tail / 2));
  return observed >= std::floor(lo) && observed <= std::ceil(hi);
}

/// Categories (by row name) whose observed count falls outside the
/// interval around the expectation.
inline std::vector<std::string> outliers(const snstf::CountsTable& observed, const snstf::ExpectedCounts& expected,
                                         double tail = kFourSigmaTail) {
  using snstf::Basis;
  std::vector<std::string> bad;
  snstf::ExpectedCounts::for_each_category([&](Basis a, Basis b, int la, int lb) {
    const double o = static_cast<double>(observed.at(a, b, la, lb));
    if (!within_poisson(o, expected.at(a, b, la, lb), tail))
      bad.push_back(snstf::ExpectedCounts::row_name(a, b, la, lb));
  });
  auto extra = [&](const char* name, double o, double e) {
    if (!within_poisson(o, e, tail)) bad.push_back(name);
  };
  extra("Matched X_11", static_cast<double>(observed.x11Matched), expected.x11Matched);
  extra("Errors X_11", static_cast<double>(observed.x11Errors), expected.x11Errors);
  extra("Matched X_22", static_cast<double>(observed.x22Matched), expected.x22Matched);
  extra("Errors X_22", static_cast<double>(observed.x22Errors), expected.x22Errors);
  return bad;
}

}  // namespace stats
