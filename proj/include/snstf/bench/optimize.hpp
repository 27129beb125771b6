// Parameter search: coordinate descent with multiplicative steps that
// shrink when a full sweep brings no improvement.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "snstf/bench/config.hpp"
#include "snstf/bench/pipeline.hpp"
#include "snstf/random.hpp"

namespace snstf {

struct DescentOptions {
  double initialStep = 0.5;  // relative change tried first
  double minStep = 1e-3;
  std::uint64_t budget = 400;  // objective evaluations after the start point
  std::uint64_t seed = 1;
};

struct DescentResult {
  std::vector<double> x;
  double value = -std::numeric_limits<double>::infinity();
  std::uint64_t evaluations = 0;
  bool budgetExhausted = false;
  bool converged = false;
};

/// Maximizes f inside [lo, hi] starting from x0.  A move is kept only if it
/// strictly improves f, so a point that is already optimal is returned
/// unchanged.  The sweep order is shuffled from the seed.
inline DescentResult coordinate_descent(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x0, const std::vector<double>& lo,
                                        const std::vector<double>& hi, const DescentOptions& opt) {
  if (x0.size() != lo.size() || x0.size() != hi.size())
    throw std::invalid_argument("coordinate_descent: dimension mismatch");
  for (std::size_t i = 0; i < x0.size(); ++i)
    if (!(lo[i] > 0 && lo[i] <= x0[i] && x0[i] <= hi[i]))
      throw std::invalid_argument("coordinate_descent: start outside positive bounds");
  DescentResult r;
  r.x = std::move(x0);
  r.value = f(r.x);
  Rng rng(derive_seed(opt.seed, stream::kOptimizer));
  std::vector<std::size_t> order(r.x.size());
  std::iota(order.begin(), order.end(), 0);
  double step = opt.initialStep;
  while (step >= opt.minStep) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    bool improved = false;
    for (std::size_t i : order) {
      for (double factor : {1.0 + step, 1.0 / (1.0 + step)}) {
        std::vector<double> cand = r.x;
        cand[i] = std::clamp(r.x[i] * factor, lo[i], hi[i]);
        if (cand[i] == r.x[i]) continue;
        if (r.evaluations >= opt.budget) {
          r.budgetExhausted = true;
          return r;
        }
        const double v = f(cand);
        ++r.evaluations;
        if (v > r.value) {
          r.x = std::move(cand);
          r.value = v;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  r.converged = true;
  return r;
}

/// Encoding parameters the optimizer may move.
enum class FreeParam { kMuZ, kMu2, kMu1, kPSignalWindow, kEpsilonSend, kPMu1, kPMu2 };

inline const char* to_string(FreeParam p) {
  switch (p) {
    case FreeParam::kMuZ: return "muZ";
    case FreeParam::kMu2: return "mu2";
    case FreeParam::kMu1: return "mu1";
    case FreeParam::kPSignalWindow: return "pSignalWindow";
    case FreeParam::kEpsilonSend: return "epsilonSend";
    case FreeParam::kPMu1: return "pMu1";
    case FreeParam::kPMu2: return "pMu2";
  }
  return "?";
}

inline std::vector<FreeParam> all_free_params() {
  return {FreeParam::kMuZ,         FreeParam::kMu2,  FreeParam::kMu1, FreeParam::kPSignalWindow,
          FreeParam::kEpsilonSend, FreeParam::kPMu1, FreeParam::kPMu2};
}

struct OptimizeResult {
  ExperimentConfig best;
  double skr = 0;           // clamped, bit per window
  double templateSkr = 0;
  std::uint64_t evaluations = 0;
  bool budgetExhausted = false;
};

namespace detail {

inline double& param_ref(PartySettings& s, FreeParam p) {
  switch (p) {
    case FreeParam::kMuZ: return s.muZ;
    case FreeParam::kMu2: return s.mu2;
    case FreeParam::kMu1: return s.mu1;
    case FreeParam::kPSignalWindow: return s.pSignalWindow;
    case FreeParam::kEpsilonSend: return s.epsilonSend;
    case FreeParam::kPMu1: return s.pMu1;
    case FreeParam::kPMu2: return s.pMu2;
  }
  throw std::logic_error("param_ref");
}

inline bool is_intensity(FreeParam p) {
  return p == FreeParam::kMuZ || p == FreeParam::kMu2 || p == FreeParam::kMu1;
}

}  // namespace detail

/// Optimizes the analytic key rate in the template's mode.  A symmetric
/// template (identical users) stays symmetric; otherwise both users'
/// parameters move.  Bob's mu1 is always derived from the balance
/// condition, so the result meets it by construction.  pMu0 takes up
/// 1 - pMu1 - pMu2.
inline OptimizeResult optimize(const ExperimentConfig& tmpl, const std::vector<FreeParam>& params,
                               const DescentOptions& opt) {
  validate(tmpl);
  const bool symmetric = tmpl.partyA == tmpl.partyB;
  struct Slot {
    bool alice;
    FreeParam p;
  };
  std::vector<Slot> slots;
  for (FreeParam p : params) {
    slots.push_back({true, p});
    if (!symmetric && p != FreeParam::kMu1) slots.push_back({false, p});
  }

  auto build = [&](const std::vector<double>& x) {
    ExperimentConfig c = tmpl;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      detail::param_ref(slots[i].alice ? c.partyA : c.partyB, slots[i].p) = x[i];
      if (symmetric) detail::param_ref(c.partyB, slots[i].p) = x[i];
    }
    for (PartySettings* s : {&c.partyA, &c.partyB}) s->pMu0 = 1.0 - s->pMu1 - s->pMu2;
    c.partyB.mu1 = balanced_mu1_b(c.partyA, c.partyB);
    return c;
  };
  auto objective = [&](const std::vector<double>& x) {
    const ExperimentConfig c = build(x);
    try {
      validate(c);
    } catch (const ConfigError&) {
      return -std::numeric_limits<double>::infinity();
    }
    if (c.partyA.pMu0 < 0.0 || c.partyB.pMu0 < 0.0) return -std::numeric_limits<double>::infinity();
    // The unclamped rate still ranks settings that yield no key.
    return analytic_report(c).skrUnclamped;
  };

  std::vector<double> x0, lo, hi;
  for (const Slot& s : slots) {
    const PartySettings& ps = s.alice ? tmpl.partyA : tmpl.partyB;
    PartySettings copy = ps;
    x0.push_back(detail::param_ref(copy, s.p));
    lo.push_back(detail::is_intensity(s.p) ? 1e-4 : 1e-3);
    hi.push_back(detail::is_intensity(s.p) ? 2.0 : 0.999);
  }

  // The start point is the template with Bob's mu1 rebalanced.
  OptimizeResult out;
  out.best = build(x0);
  validate(out.best);
  out.templateSkr = analytic_report(out.best).skr;
  out.skr = out.templateSkr;
  if (slots.empty()) return out;
  const DescentResult d = coordinate_descent(objective, x0, lo, hi, opt);
  out.evaluations = d.evaluations;
  out.budgetExhausted = d.budgetExhausted;
  if (d.x != x0) {
    out.best = build(d.x);
    out.skr = analytic_report(out.best).skr;
  }
  return out;
}

}  // namespace snstf
