#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "snstf/engine.hpp"
#include "stats.hpp"

using namespace snstf;

namespace {

// A short, bright link: enough clicks per million windows to test
// statistics quickly.
SessionConfig bright_link() {
  SessionConfig c;
  c.link.measuredLossAliceDb = 8.0;
  c.link.measuredLossBobDb = 9.0;
  c.detectors = {0.8, 0.6, 2e4, 1e4, 1.0};
  c.noise.visibility = 0.95;
  c.noise.residualPhaseStdRad = 0.2;
  return c;
}

SessionConfig dark_only(double darkHz) {
  SessionConfig c;
  c.link.measuredLossAliceDb = 1000.0;
  c.link.measuredLossBobDb = 1000.0;
  c.detectors = {0.8, 0.6, darkHz, darkHz, 1.0};
  return c;
}

}  // namespace

TEST(Choices, DegenerateDistribution) {
  PartySettings s;
  s.pSignalWindow = 1;
  s.epsilonSend = 1;
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const WindowChoice c = choose_window(s, Arm::kAlice, rng);
    EXPECT_EQ(c.kind, WindowKind::kSignal);
    EXPECT_EQ(c.label, Intensity::kMuZ);
    EXPECT_EQ(c.zBit, 1);
    EXPECT_LT(c.phaseSlice, kPhaseSlices);
  }
}

TEST(Choices, BitConventions) {
  EXPECT_EQ(z_bit(Arm::kAlice, true), 1);
  EXPECT_EQ(z_bit(Arm::kAlice, false), 0);
  EXPECT_EQ(z_bit(Arm::kBob, true), 0);
  EXPECT_EQ(z_bit(Arm::kBob, false), 1);
}

TEST(Choices, EmpiricalFrequencies) {
  const PartySettings s;
  Rng rng(7);
  const int n = 10'000'000;
  std::uint64_t decoyMu1 = 0, send = 0, signal = 0, slice0 = 0;
  for (int k = 0; k < n; ++k) {
    const WindowChoice c = choose_window(s, Arm::kBob, rng);
    if (c.kind == WindowKind::kDecoy && c.label == Intensity::kMu1) ++decoyMu1;
    if (c.kind == WindowKind::kSignal) {
      ++signal;
      if (c.label == Intensity::kMuZ) ++send;
    }
    if (c.phaseSlice == 0) ++slice0;
  }
  auto within = [&](double count, double total, double p, double z) {
    return std::abs(count - total * p) <= z * std::sqrt(total * p * (1 - p));
  };
  EXPECT_TRUE(within(decoyMu1, n, 0.265 * 0.606, 4)) << decoyMu1;
  EXPECT_TRUE(within(signal, n, 0.735, 4));
  EXPECT_TRUE(within(send, signal, 0.269, 4));
  EXPECT_TRUE(within(slice0, n, 1.0 / 16, 4));
}

TEST(Choices, ReplayIsIdentical) {
  const PartySettings s;
  Rng a(99), b(99);
  for (int k = 0; k < 1000; ++k) EXPECT_EQ(choose_window(s, Arm::kAlice, a), choose_window(s, Arm::kAlice, b));
}

TEST(Window, VacuumNeverClicksWithoutDarkCounts) {
  SessionConfig c = bright_link();
  c.detectors.darkD0Hz = c.detectors.darkD1Hz = 0;
  c.alice.mu0 = c.bob.mu0 = 0;
  const OpticsCache oc(c);
  Rng rng(1);
  WindowChoice v;
  for (int k = 0; k < 10000; ++k) EXPECT_EQ(simulate_window(v, v, 0.3, c, oc, rng), Outcome::kNoClick);
}

TEST(Window, ConstructivePortOnly) {
  SessionConfig c = bright_link();
  c.detectors.darkD0Hz = c.detectors.darkD1Hz = 0;
  c.noise.visibility = 1;
  c.noise.timingJitterPs = 0;
  c.link.measuredLossBobDb = 8.0;  // equal arrivals
  const OpticsCache oc(c);
  Rng rng(1);
  WindowChoice w;
  w.label = Intensity::kMu2;
  w.phaseSlice = 5;
  int clicks = 0;
  for (int k = 0; k < 10000; ++k) {
    const Outcome o = simulate_window(w, w, 0.0, c, oc, rng);
    EXPECT_TRUE(o == Outcome::kNoClick || o == Outcome::kD0);
    clicks += o == Outcome::kD0;
  }
  EXPECT_GT(clicks, 100);
}

TEST(MessageQueueTest, DeliversAfterLatencyInOrder) {
  MessageQueue<int> q(1e-3);
  q.push(1, 0.0);
  q.push(2, 0.5e-3);
  EXPECT_TRUE(q.deliver(0.9e-3).empty());
  EXPECT_EQ(q.deliver(1.0e-3), std::vector<int>{1});
  EXPECT_EQ(q.pending(), 1u);
  EXPECT_EQ(q.deliver(1.0), std::vector<int>{2});
  EXPECT_THROW(MessageQueue<int>(-1.0), std::invalid_argument);
}

TEST(Session, EmptyRecord) {
  const SessionRecord r = run_session(bright_link(), 0, 1, 1);
  EXPECT_TRUE(r.announcements.empty());
  EXPECT_EQ(r.counts.total(), 0u);
}

TEST(Session, ConservationAndLogs) {
  const SessionRecord r = run_session(bright_link(), 1'000'000, 3, 2);
  EXPECT_EQ(r.counts.total(), r.announcements.size());
  EXPECT_EQ(r.noClick + r.doubleClick + r.announcements.size() + r.blanked, r.N);
  ASSERT_EQ(r.aliceLog.size(), r.announcements.size());
  ASSERT_EQ(r.bobLog.size(), r.announcements.size());
  for (std::size_t k = 0; k < r.announcements.size(); ++k) {
    EXPECT_TRUE(r.announcements[k].announced);
    EXPECT_EQ(r.aliceLog[k].windowIndex, r.announcements[k].windowIndex);
    if (k) EXPECT_LT(r.announcements[k - 1].windowIndex, r.announcements[k].windowIndex);
  }
  EXPECT_GT(r.doubleClick, 0u);
}

TEST(Session, ChunkCountDoesNotChangeResult) {
  const SessionConfig c = bright_link();
  const SessionRecord a = run_session(c, 1'000'000, 5, 1);
  const SessionRecord b = run_session(c, 1'000'000, 5, 4);
  const SessionRecord d = run_session(c, 1'000'000, 6, 4);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_EQ(a.announcements, b.announcements);
  EXPECT_EQ(a.aliceLog, b.aliceLog);
  EXPECT_EQ(a.bobLog, b.bobLog);
  EXPECT_FALSE(a.counts == d.counts);
}

TEST(Session, ThinnedChunkInvariance) {
  SessionOptions o;
  o.sampler = Sampler::kHeraldedOnly;
  const SessionRecord a = run_session(bright_link(), 3'000'000, 5, 1, o);
  const SessionRecord b = run_session(bright_link(), 3'000'000, 5, 3, o);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_EQ(a.aliceLog, b.aliceLog);
  EXPECT_EQ(a.sampler, Sampler::kHeraldedOnly);
}

TEST(Session, AutoSamplerSwitchesAboveLimit) {
  EXPECT_EQ(run_session(dark_only(1.0), 1000, 1, 1).sampler, Sampler::kEveryWindow);
  EXPECT_EQ(run_session(dark_only(1.0), kEveryWindowLimit + 1, 1, 1).sampler, Sampler::kHeraldedOnly);
}

TEST(Session, CountsAddAcrossPartitions) {
  CountsTable a, b, c;
  a.at(Basis::kZ, Basis::kZ, 3, 0) = 2;
  b.at(Basis::kX, Basis::kZ, 1, 0) = 5;
  c.x11Matched = 4;
  EXPECT_EQ((a + b) + c, a + (b + c));
  EXPECT_EQ(a + b, b + a);
  EXPECT_THROW(a.at(Basis::kZ, Basis::kZ, 1, 0), std::out_of_range);
}

TEST(Session, BlankedWindowsProduceNoEvents) {
  SessionOptions o;
  o.invalid = {{1000, 201000}, {150000, 250000}};
  const SessionRecord r = run_session(bright_link(), 1'000'000, 3, 2, o);
  EXPECT_EQ(r.blanked, 249000u);
  for (const auto& e : r.announcements) EXPECT_FALSE(e.windowIndex >= 1000 && e.windowIndex < 250000);
  EXPECT_EQ(r.noClick + r.doubleClick + r.announcements.size() + r.blanked, r.N);
}

TEST(Session, BlankingIntervalsBecomeWholeBlocks) {
  struct Iv {
    double startS, endS;
  };
  const auto r = blanking_to_ranges(std::vector<Iv>{{1.1e-6, 1.0e-3 + 1.1e-6}});
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].begin, 5u * kWindowsPerBlock);
  EXPECT_EQ(r[0].end, 5006u * kWindowsPerBlock);
}

TEST(Session, ConfigErrorsBeforeWork) {
  SessionConfig c = bright_link();
  c.alice.pMu0 = 0.5;
  EXPECT_THROW(run_session(c, 1'000'000'000'000ULL, 1, 1), std::invalid_argument);
  EXPECT_THROW(run_session(bright_link(), 10, 1, 0), std::invalid_argument);
}

TEST(Expected, VacuumChannelIsEmpty) {
  const ExpectedCounts e = expected_counts(dark_only(0.0), 1e12);
  EXPECT_LT(e.total(), 1e-50);
}

TEST(Expected, DarkLimitedRegime) {
  const double pd = 1e-8;  // 10 Hz over 1 ns
  const SessionConfig c = dark_only(10.0);
  const double N = 1e12;
  const ExpectedCounts e = expected_counts(c, N);
  const PartySettings& s = c.alice;
  const double pXmu1 = (1 - s.pSignalWindow) * s.pMu1;
  const double pZsend = s.pSignalWindow * s.epsilonSend;
  EXPECT_NEAR(e.at(Basis::kX, Basis::kX, 1, 1), N * pXmu1 * pXmu1 * 2 * pd, 1e-6 * N * pXmu1 * pXmu1 * 2 * pd);
  EXPECT_NEAR(e.at(Basis::kZ, Basis::kZ, 3, 3), N * pZsend * pZsend * 2 * pd, 1e-6 * N * pZsend * pZsend * 2 * pd);
  // Errors are half of the matched clicks.
  EXPECT_NEAR(e.x11Errors, 0.5 * e.x11Matched, 1e-9 * e.x11Matched);
}

TEST(Expected, MonteCarloAgreesEveryWindow) {
  const SessionConfig c = bright_link();
  const double N = 2e6;
  const SessionRecord r = run_session(c, static_cast<std::uint64_t>(N), 21, 2);
  const auto bad = stats::outliers(r.counts, expected_counts(c, N));
  EXPECT_TRUE(bad.empty()) << bad.front();
  const double heralded = static_cast<double>(r.announcements.size());
  EXPECT_TRUE(stats::within_poisson(heralded, expected_counts(c, N).total()));
}

TEST(Expected, MonteCarloAgreesThinned) {
  const SessionConfig c = bright_link();
  const double N = 2e6;
  SessionOptions o;
  o.sampler = Sampler::kHeraldedOnly;
  const SessionRecord r = run_session(c, static_cast<std::uint64_t>(N), 22, 2, o);
  const auto bad = stats::outliers(r.counts, expected_counts(c, N));
  EXPECT_TRUE(bad.empty()) << bad.front();
}

TEST(Expected, ResidualPhaseRaisesMatchedErrors) {
  SessionConfig c = bright_link();
  c.noise.residualPhaseStdRad = 0.0;
  const ExpectedCounts sharp = expected_counts(c, 1e9);
  c.noise.residualPhaseStdRad = 0.4;
  const ExpectedCounts blurred = expected_counts(c, 1e9);
  EXPECT_GT(blurred.qber_x11(), sharp.qber_x11());
  // Totals barely move: the phase only redistributes between ports.
  EXPECT_NEAR(blurred.total() / sharp.total(), 1.0, 0.01);
}
