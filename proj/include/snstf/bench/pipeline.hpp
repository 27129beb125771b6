// End-to-end runs built from an ExperimentConfig, and their text reports.
#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>

#include "snstf/bench/config.hpp"
#include "snstf/engine.hpp"
#include "snstf/postproc.hpp"
#include "snstf/servo.hpp"

namespace snstf {

/// Expected counts for the configured N, then the full estimate chain.
inline KeyRateReport analytic_report(const ExperimentConfig& c) {
  validate(c);
  const ExpectedCounts e = expected_counts(session_config(c), c.run.N);
  return analyze_counts(e, c.partyA, c.partyB, c.security, c.run.N, total_fiber_loss_db(c.link));
}

inline KeyRateReport analytic_report(ExperimentConfig c, RateMode mode) {
  c.security.mode = mode;
  return analytic_report(c);
}

struct SimulationRun {
  SessionRecord session;
  SessionAnalysis analysis;
};

inline SimulationRun run_simulation(const ExperimentConfig& c, const SessionOptions& opt = {}) {
  validate(c);
  SimulationRun r;
  r.session = run_session(session_config(c), static_cast<std::uint64_t>(c.run.N), c.run.seed, c.run.chunkCount, opt);
  r.analysis = analyze_session(r.session, c.partyA, c.partyB, c.security, total_fiber_loss_db(c.link));
  return r;
}

/// Config echo followed by the session and key-rate blocks.  Contains nothing
/// that depends on wall-clock time or the machine.
inline void write_simulation_report(std::ostream& os, const ExperimentConfig& c, const SimulationRun& r) {
  os << "# simulate report\n";
  write_config(os, c);
  os << '\n';
  write_session(os, r.session);
  os << "Matched X (sifted) = " << r.analysis.sifted.xMatched.size() << '\n'
     << "Z bits (sifted) = " << r.analysis.sifted.aliceZ.size() << '\n';
  write_report(os, r.analysis.report);
}

inline void write_keyrate_report(std::ostream& os, const ExperimentConfig& c, const KeyRateReport& r) {
  os << "# keyrate report\n";
  write_config(os, c);
  os << "\n[expected_counts]\n";
  write_counts(os, expected_counts(session_config(c), c.run.N));
  write_report(os, r);
}

inline void write_stabilization_report(std::ostream& os, const ExperimentConfig& c, double durationS, Stages stages,
                                       const StabilizationSummary& s) {
  os << "# stabilize report\n";
  write_config(os, c);
  os << "\n[stabilization]\n"
     << "duration_s = " << durationS << '\n'
     << "stages = " << to_string(stages) << '\n'
     << "seed = " << c.run.seed << '\n'
     << "freeDriftStdRadPerS = " << s.freeDriftStdRadPerS << '\n'
     << "fastLockedDriftStdRadPerS = " << s.fastLockedDriftStdRadPerS << '\n'
     << "reductionFactor = " << s.reductionFactor << '\n'
     << "analyticReductionFactor = " << dual_band_reduction_factor(c.noise) << '\n'
     << "residualPhaseStdRadC = " << s.residualPhaseStdRadC << '\n'
     << "residualPhaseStdRadQ = " << s.residualPhaseStdRadQ << '\n'
     << "residualSkewnessQ = " << s.residualSkewnessQ << '\n'
     << "residualExcessKurtosisQ = " << s.residualExcessKurtosisQ << '\n'
     << "freqReadoutHz = " << s.freqReadoutHz << '\n'
     << "fastCycles = " << s.fastCycles << '\n'
     << "fsResets = " << s.fsResets << '\n'
     << "fsSaturations = " << s.fsSaturations << '\n'
     << "blankedFraction = " << s.blankedFraction << '\n';
}

}  // namespace snstf
