// Three-party session simulator.  Alice and Bob draw window choices,
// Charlie interferes the arriving pulses and announces single clicks, and
// the announcements reach the users through a message queue.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <thread>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "snstf/counts.hpp"
#include "snstf/optics.hpp"
#include "snstf/random.hpp"
#include "snstf/ratecore.hpp"

namespace snstf {

inline constexpr int kPhaseSlices = 16;
inline constexpr std::uint64_t kWindowsPerBlock = 100;  // quantum slots per 200 ns block
inline constexpr double kBlockDurationS = 200e-9;
inline constexpr double kSlotDurationS = 1e-9;

enum class WindowKind : std::uint8_t { kSignal, kDecoy };

struct WindowChoice {
  WindowKind kind = WindowKind::kDecoy;
  Intensity label = Intensity::kMu0;
  std::uint8_t phaseSlice = 0;
  std::int8_t zBit = -1;  // -1 in decoy windows

  Basis basis() const { return kind == WindowKind::kSignal ? Basis::kZ : Basis::kX; }
  int digit() const { return static_cast<int>(label); }
  bool operator==(const WindowChoice&) const = default;
};

inline double intensity_of(const PartySettings& s, Intensity l) {
  switch (l) {
    case Intensity::kMu0: return s.mu0;
    case Intensity::kMu1: return s.mu1;
    case Intensity::kMu2: return s.mu2;
    case Intensity::kMuZ: return s.muZ;
  }
  return 0.0;
}

/// Z-bit convention: Alice's send is bit 1, Bob's send is bit 0.
inline std::int8_t z_bit(Arm party, bool sent) {
  return static_cast<std::int8_t>((party == Arm::kAlice) == sent ? 1 : 0);
}

inline WindowChoice choose_window(const PartySettings& s, Arm party, Rng& rng) {
  WindowChoice c;
  const double u = rng.uniform();
  const double v = rng.uniform();
  if (u < s.pSignalWindow) {
    c.kind = WindowKind::kSignal;
    const bool send = v < s.epsilonSend;
    c.label = send ? Intensity::kMuZ : Intensity::kMu0;
    c.zBit = z_bit(party, send);
  } else {
    c.kind = WindowKind::kDecoy;
    c.label = v < s.pMu0 ? Intensity::kMu0 : (v < s.pMu0 + s.pMu1 ? Intensity::kMu1 : Intensity::kMu2);
  }
  c.phaseSlice = static_cast<std::uint8_t>(rng.below(kPhaseSlices));
  return c;
}

/// Everything a session needs to know about the hardware and the users.
struct SessionConfig {
  LinkConfig link;
  DetectorModel detectors;
  NoiseModel noise;
  PartySettings alice;
  PartySettings bob;
};

inline void validate(const SessionConfig& c) {
  validate(c.link);
  validate(c.detectors);
  validate(c.noise);
  validate(c.alice, "alice");
  validate(c.bob, "bob");
}

/// Per-session constants of the measurement model.
struct OpticsCache {
  double tA, tB, eff0, eff1, pd0, pd1, visibility;

  explicit OpticsCache(const SessionConfig& c)
      : tA(channel_transmittance(c.link, Arm::kAlice)),
        tB(channel_transmittance(c.link, Arm::kBob)),
        eff0(c.detectors.effD0),
        eff1(c.detectors.effD1),
        pd0(dark_probability(c.detectors, Detector::kD0)),
        pd1(dark_probability(c.detectors, Detector::kD1)),
        visibility(effective_visibility(c.noise)) {}

  ClickPair clicks(double muA, double muB, double delta) const {
    return click_probabilities(muA * tA, muB * tB, delta, visibility, pd0, pd1, eff0, eff1);
  }
};

inline double slice_phase(int sliceDifference) {
  return 2.0 * std::numbers::pi * static_cast<double>(sliceDifference) / kPhaseSlices;
}

enum class Outcome : std::uint8_t { kNoClick, kD0, kD1, kDouble };

/// One window at Charlie.  `channelPhase` is the stabilized residual phase
/// of the quantum band.
inline Outcome simulate_window(const WindowChoice& a, const WindowChoice& b, double channelPhase,
                               const SessionConfig& cfg, const OpticsCache& oc, Rng& rng) {
  const double delta = slice_phase(a.phaseSlice - b.phaseSlice) + channelPhase;
  const ClickPair p = oc.clicks(intensity_of(cfg.alice, a.label), intensity_of(cfg.bob, b.label), delta);
  const bool c0 = rng.uniform() < p.d0;
  const bool c1 = rng.uniform() < p.d1;
  if (c0 && c1) return Outcome::kDouble;
  if (c0) return Outcome::kD0;
  if (c1) return Outcome::kD1;
  return Outcome::kNoClick;
}

/// Residual phase of one 200 ns block, drawn from its own counter-based
/// stream so any window can look it up independently.
inline double block_phase(std::uint64_t seed, std::uint64_t block, double sigma) {
  if (sigma <= 0.0) return 0.0;
  Rng r(derive_seed(seed, stream::kBlockPhase, block));
  return sigma * r.normal();
}

inline double window_time_s(std::uint64_t index) {
  return static_cast<double>(index / kWindowsPerBlock) * kBlockDurationS +
         static_cast<double>(index % kWindowsPerBlock) * kSlotDurationS;
}

/// Half-open range of window indices.
struct WindowRange {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
  bool operator==(const WindowRange&) const = default;
};

/// Converts servo blanking intervals (seconds) into whole invalid blocks.
template <class Interval>
std::vector<WindowRange> blanking_to_ranges(const std::vector<Interval>& intervals) {
  std::vector<WindowRange> out;
  for (const auto& iv : intervals) {
    const auto b0 = static_cast<std::uint64_t>(std::floor(iv.startS / kBlockDurationS));
    const auto b1 = static_cast<std::uint64_t>(std::ceil(iv.endS / kBlockDurationS));
    out.push_back({b0 * kWindowsPerBlock, std::max(b0 + 1, b1) * kWindowsPerBlock});
  }
  return out;
}

/// In-process channel with a fixed delivery latency.
template <class T>
class MessageQueue {
 public:
  explicit MessageQueue(double latencyS = 0.0) : latency_(latencyS) {
    if (!(latencyS >= 0.0)) throw std::invalid_argument("message queue: latency must be >= 0");
  }
  void push(T msg, double sentS) { q_.push_back({std::move(msg), sentS + latency_}); }
  /// Messages whose delivery time has been reached, in send order.
  std::vector<T> deliver(double nowS) {
    std::vector<T> out;
    while (!q_.empty() && q_.front().due <= nowS) {
      out.push_back(std::move(q_.front().msg));
      q_.pop_front();
    }
    return out;
  }
  std::size_t pending() const { return q_.size(); }

 private:
  struct Item {
    T msg;
    double due;
  };
  std::deque<Item> q_;
  double latency_;
};

/// Charlie's public announcement: which window, which detector.  It
/// reveals none of the users' choices.
struct HeraldedEvent {
  std::uint64_t windowIndex = 0;
  Detector detector = Detector::kD0;
  bool announced = false;
  bool operator==(const HeraldedEvent&) const = default;
};

/// A user's private record of one heralded window.
struct LoggedChoice {
  std::uint64_t windowIndex = 0;
  WindowChoice choice;
  bool operator==(const LoggedChoice&) const = default;
};

enum class Sampler { kAuto, kEveryWindow, kHeraldedOnly };

inline const char* to_string(Sampler s) {
  switch (s) {
    case Sampler::kAuto: return "auto";
    case Sampler::kEveryWindow: return "every-window";
    case Sampler::kHeraldedOnly: return "heralded-only";
  }
  return "?";
}

struct SessionOptions {
  Sampler sampler = Sampler::kAuto;
  std::vector<WindowRange> invalid;
  double latencyS = 0.0;
  unsigned maxThreads = 0;  // 0: hardware concurrency
};

/// Above this many windows the auto sampler skips straight from one
/// potential click to the next.
inline constexpr std::uint64_t kEveryWindowLimit = 1'000'000'000ULL;

/// Users' logs hold only the heralded windows: the rest carry no
/// information that post-processing could use.
struct SessionRecord {
  std::uint64_t N = 0;
  std::uint64_t seed = 0;
  unsigned chunkCount = 1;
  Sampler sampler = Sampler::kEveryWindow;
  std::vector<LoggedChoice> aliceLog;
  std::vector<LoggedChoice> bobLog;
  std::vector<HeraldedEvent> announcements;  // Charlie's public record
  CountsTable counts;
  std::vector<WindowRange> invalid;
  std::uint64_t noClick = 0;
  std::uint64_t doubleClick = 0;
  std::uint64_t blanked = 0;
};

namespace detail {

struct ChunkResult {
  std::vector<LoggedChoice> alice, bob;
  std::vector<HeraldedEvent> events;
  std::uint64_t doubles = 0;
};

inline bool in_ranges(const std::vector<WindowRange>& r, std::uint64_t i) {
  // Ranges are few (one per stretcher reset); a scan is fine.
  for (const auto& w : r)
    if (i >= w.begin && i < w.end) return true;
  return false;
}

inline void record(ChunkResult& out, std::uint64_t i, const WindowChoice& a, const WindowChoice& b, Outcome o) {
  if (o == Outcome::kDouble) {
    ++out.doubles;
    return;
  }
  if (o == Outcome::kNoClick) return;
  out.alice.push_back({i, a});
  out.bob.push_back({i, b});
  out.events.push_back({i, o == Outcome::kD0 ? Detector::kD0 : Detector::kD1, false});
}

inline void run_blocks(const SessionConfig& cfg, const OpticsCache& oc, std::uint64_t N, std::uint64_t seed,
                       std::uint64_t b0, std::uint64_t b1, const std::vector<WindowRange>& invalid,
                       ChunkResult& out) {
  const double sigma = cfg.noise.residualPhaseStdRad;
  for (std::uint64_t blk = b0; blk < b1; ++blk) {
    Rng rng(derive_seed(seed, stream::kWindowBlock, blk));
    const double phase = block_phase(seed, blk, sigma);
    const std::uint64_t first = blk * kWindowsPerBlock;
    const std::uint64_t last = std::min(N, first + kWindowsPerBlock);
    for (std::uint64_t i = first; i < last; ++i) {
      const WindowChoice a = choose_window(cfg.alice, Arm::kAlice, rng);
      const WindowChoice b = choose_window(cfg.bob, Arm::kBob, rng);
      const Outcome o = simulate_window(a, b, phase, cfg, oc, rng);
      if (!invalid.empty() && in_ranges(invalid, i)) continue;
      record(out, i, a, b, o);
    }
  }
}

/// Upper bound on the click probability of any window.
inline double max_click_probability(const SessionConfig& cfg, const OpticsCache& oc) {
  const double a = std::max(cfg.alice.muZ, cfg.alice.mu2) * oc.tA;
  const double b = std::max(cfg.bob.muZ, cfg.bob.mu2) * oc.tB;
  const double peak = 0.5 * (std::sqrt(a) + std::sqrt(b)) * (std::sqrt(a) + std::sqrt(b));
  const double none = (1.0 - oc.pd0) * (1.0 - oc.pd1) * std::exp(-(oc.eff0 + oc.eff1) * peak);
  return std::min(1.0, 1.0 - none);
}

inline constexpr std::uint64_t kSpanWindows = 1ULL << 20;

// Exact thinning: candidate windows arrive as a Bernoulli(pMax) process;
// a candidate gets fresh choices and clicks with probability p / pMax.
inline void run_spans(const SessionConfig& cfg, const OpticsCache& oc, std::uint64_t N, std::uint64_t seed,
                      std::uint64_t s0, std::uint64_t s1, const std::vector<WindowRange>& invalid,
                      ChunkResult& out) {
  const double pMax = max_click_probability(cfg, oc);
  if (pMax <= 0.0) return;
  const double logQ = std::log1p(-pMax);
  const double sigma = cfg.noise.residualPhaseStdRad;
  for (std::uint64_t s = s0; s < s1; ++s) {
    Rng rng(derive_seed(seed, stream::kThinnedSpan, s));
    const std::uint64_t end = std::min(N, (s + 1) * kSpanWindows);
    std::uint64_t i = s * kSpanWindows;
    while (true) {
      if (pMax < 1.0) {
        const double skip = std::floor(std::log(1.0 - rng.uniform()) / logQ);
        if (skip >= static_cast<double>(end - i)) break;
        i += static_cast<std::uint64_t>(skip);
      }
      if (i >= end) break;
      const WindowChoice a = choose_window(cfg.alice, Arm::kAlice, rng);
      const WindowChoice b = choose_window(cfg.bob, Arm::kBob, rng);
      const double delta = slice_phase(a.phaseSlice - b.phaseSlice) + block_phase(seed, i / kWindowsPerBlock, sigma);
      const HeraldProbabilities h =
          herald_probabilities(oc.clicks(intensity_of(cfg.alice, a.label), intensity_of(cfg.bob, b.label), delta));
      const double u = rng.uniform() * pMax;
      Outcome o = Outcome::kNoClick;
      if (u < h.d0Only) o = Outcome::kD0;
      else if (u < h.d0Only + h.d1Only) o = Outcome::kD1;
      else if (u < h.any()) o = Outcome::kDouble;
      if (invalid.empty() || !in_ranges(invalid, i)) record(out, i, a, b, o);
      ++i;
    }
  }
}

inline std::uint64_t covered(const std::vector<WindowRange>& ranges, std::uint64_t N) {
  // Union length of the ranges clipped to [0, N).
  std::vector<WindowRange> r(ranges);
  std::sort(r.begin(), r.end(), [](const WindowRange& x, const WindowRange& y) { return x.begin < y.begin; });
  std::uint64_t total = 0, reach = 0;
  for (const auto& w : r) {
    const std::uint64_t b = std::max(w.begin, reach), e = std::min(w.end, N);
    if (e > b) total += e - b;
    reach = std::max(reach, std::min(w.end, N));
  }
  return total;
}

}  // namespace detail

/// Tallies one heralded window into a counts table.
inline void tally(CountsTable& c, const WindowChoice& a, const WindowChoice& b, Detector d) {
  ++c.at(a.basis(), b.basis(), a.digit(), b.digit());
  if (a.kind != WindowKind::kDecoy || b.kind != WindowKind::kDecoy || a.label != b.label) return;
  if (a.label != Intensity::kMu1 && a.label != Intensity::kMu2) return;
  const int diff = ((a.phaseSlice - b.phaseSlice) % kPhaseSlices + kPhaseSlices) % kPhaseSlices;
  if (diff != 0 && diff != kPhaseSlices / 2) return;
  // Equal phases should light D0, opposite phases D1.
  const bool error = (diff == 0) == (d == Detector::kD1);
  if (a.label == Intensity::kMu1) {
    ++c.x11Matched;
    c.x11Errors += error ? 1 : 0;
  } else {
    ++c.x22Matched;
    c.x22Errors += error ? 1 : 0;
  }
}

/// Runs N windows.  Work is split into fixed blocks, each with its own
/// derived stream, so the record depends on (seed, N, sampler) only; the
/// chunk count changes the parallel partition, never the result.
inline SessionRecord run_session(const SessionConfig& cfg, std::uint64_t N, std::uint64_t seed, unsigned chunkCount,
                                 const SessionOptions& opt = {}) {
  validate(cfg);
  if (chunkCount < 1) throw std::invalid_argument("run_session: chunkCount must be >= 1");
  SessionRecord rec;
  rec.N = N;
  rec.seed = seed;
  rec.chunkCount = chunkCount;
  rec.invalid = opt.invalid;
  rec.sampler = opt.sampler == Sampler::kAuto
                    ? (N > kEveryWindowLimit ? Sampler::kHeraldedOnly : Sampler::kEveryWindow)
                    : opt.sampler;
  if (N == 0) return rec;

  const OpticsCache oc(cfg);
  const bool thinned = rec.sampler == Sampler::kHeraldedOnly;
  const std::uint64_t unit = thinned ? detail::kSpanWindows : kWindowsPerBlock;
  const std::uint64_t units = (N + unit - 1) / unit;

  std::vector<detail::ChunkResult> parts(chunkCount);
  auto work = [&](unsigned c) {
    const std::uint64_t u0 = units * c / chunkCount, u1 = units * (c + 1) / chunkCount;
    if (thinned) detail::run_spans(cfg, oc, N, seed, u0, u1, opt.invalid, parts[c]);
    else detail::run_blocks(cfg, oc, N, seed, u0, u1, opt.invalid, parts[c]);
  };
  unsigned width = opt.maxThreads ? opt.maxThreads : std::max(1u, std::thread::hardware_concurrency());
  width = std::min(width, chunkCount);
  for (unsigned c0 = 0; c0 < chunkCount; c0 += width) {
    std::vector<std::thread> pool;
    for (unsigned c = c0; c < std::min(chunkCount, c0 + width); ++c) pool.emplace_back(work, c);
    for (auto& t : pool) t.join();
  }

  // Merge in chunk order; Charlie's announcements then travel to the users.
  MessageQueue<HeraldedEvent> toUsers(opt.latencyS);
  for (auto& p : parts) {
    rec.doubleClick += p.doubles;
    for (const auto& e : p.events) toUsers.push(e, window_time_s(e.windowIndex));
    rec.aliceLog.insert(rec.aliceLog.end(), p.alice.begin(), p.alice.end());
    rec.bobLog.insert(rec.bobLog.end(), p.bob.begin(), p.bob.end());
  }
  const double endS = window_time_s(N - 1) + opt.latencyS;
  rec.announcements = toUsers.deliver(endS);
  for (auto& e : rec.announcements) e.announced = true;
  for (std::size_t k = 0; k < rec.announcements.size(); ++k)
    tally(rec.counts, rec.aliceLog[k].choice, rec.bobLog[k].choice, rec.announcements[k].detector);

  rec.blanked = detail::covered(opt.invalid, N);
  rec.noClick = N - rec.blanked - rec.doubleClick - rec.announcements.size();
  return rec;
}

/// Closed-form expectation of every counts-table entry for N windows:
/// enumerates the users' choice classes and the 16 slice differences and
/// averages over the Gaussian residual phase.
inline ExpectedCounts expected_counts(const SessionConfig& cfg, double N) {
  validate(cfg);
  if (!(N >= 0.0)) throw std::invalid_argument("expected_counts: N must be >= 0");
  const OpticsCache oc(cfg);
  struct Class {
    Basis basis;
    int digit;
    double p, mu;
  };
  auto classes = [](const PartySettings& s) {
    const double pz = s.pSignalWindow, px = 1.0 - s.pSignalWindow;
    return std::vector<Class>{{Basis::kX, 0, px * s.pMu0, s.mu0}, {Basis::kX, 1, px * s.pMu1, s.mu1},
                              {Basis::kX, 2, px * s.pMu2, s.mu2}, {Basis::kZ, 0, pz * (1 - s.epsilonSend), s.mu0},
                              {Basis::kZ, 3, pz * s.epsilonSend, s.muZ}};
  };
  const double sigma = cfg.noise.residualPhaseStdRad;
  // Herald probabilities averaged over the residual phase.
  auto averaged = [&](double muA, double muB, double delta) {
    auto at = [&](double x) { return herald_probabilities(oc.clicks(muA, muB, delta + x)); };
    if (sigma <= 0.0) return at(0.0);
    HeraldProbabilities acc;
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
    auto integrate = [&](auto pick) {
      return boost::math::quadrature::gauss<double, 30>::integrate(
          [&](double x) { return pick(at(x)) * norm * std::exp(-0.5 * x * x / (sigma * sigma)); }, -8.0 * sigma,
          8.0 * sigma);
    };
    acc.d0Only = integrate([](const HeraldProbabilities& h) { return h.d0Only; });
    acc.d1Only = integrate([](const HeraldProbabilities& h) { return h.d1Only; });
    return acc;
  };

  ExpectedCounts out;
  for (const Class& a : classes(cfg.alice)) {
    for (const Class& b : classes(cfg.bob)) {
      const double w = N * a.p * b.p / kPhaseSlices;
      const bool matchedClass = a.basis == Basis::kX && b.basis == Basis::kX && a.digit == b.digit && a.digit != 0;
      for (int d = 0; d < kPhaseSlices; ++d) {
        const HeraldProbabilities h = averaged(a.mu, b.mu, slice_phase(d));
        out.at(a.basis, b.basis, a.digit, b.digit) += w * (h.d0Only + h.d1Only);
        if (matchedClass && (d == 0 || d == kPhaseSlices / 2)) {
          const double err = d == 0 ? h.d1Only : h.d0Only;
          if (a.digit == 1) {
            out.x11Matched += w * (h.d0Only + h.d1Only);
            out.x11Errors += w * err;
          } else {
            out.x22Matched += w * (h.d0Only + h.d1Only);
            out.x22Errors += w * err;
          }
        }
      }
    }
  }
  return out;
}

/// Structured-text summary of a session.
inline void write_session(std::ostream& os, const SessionRecord& r) {
  os << "[session]\n"
     << "windows = " << r.N << '\n'
     << "seed = " << r.seed << '\n'
     << "chunks = " << r.chunkCount << '\n'
     << "sampler = " << to_string(r.sampler) << '\n'
     << "heralded = " << r.announcements.size() << '\n'
     << "no_click = " << r.noClick << '\n'
     << "double_click = " << r.doubleClick << '\n'
     << "blanked = " << r.blanked << '\n'
     << "[counts]\n";
  write_counts(os, r.counts);
}

}  // namespace snstf
