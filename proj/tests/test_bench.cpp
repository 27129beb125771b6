#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "snstf/bench/optimize.hpp"
#include "snstf/bench/presets.hpp"
#include "snstf/bench/sweep.hpp"
#include "snstf/bench/verify.hpp"

using namespace snstf;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

}  // namespace

TEST(Config, RoundTripsEveryPreset) {
  for (const auto& name : preset_names()) {
    const ExperimentConfig c = preset(name);
    std::ostringstream os;
    write_config(os, c);
    EXPECT_EQ(parse(os.str()), c) << name;
  }
}

TEST(Config, RoundTripKeepsMissingMeasuredLoss) {
  ExperimentConfig c;
  c.link.lenAliceKm = 12.5;
  c.link.measuredLossBobDb = 3.25;
  c.run.outputPath = "out/run.txt";
  std::ostringstream os;
  write_config(os, c);
  const ExperimentConfig back = parse(os.str());
  EXPECT_FALSE(back.link.measuredLossAliceDb.has_value());
  EXPECT_EQ(back, c);
}

TEST(Config, PresetFilesMatchBuiltins) {
  for (const auto& name : preset_names()) {
    const auto path = std::filesystem::path(SNSTF_PRESET_DIR) / (name + ".ini");
    EXPECT_EQ(load_config(path), preset(name)) << path;
  }
}

TEST(Config, MissingKeysKeepDefaults) {
  const ExperimentConfig c = parse("[run]\nseed = 7\n");
  EXPECT_EQ(c.run.seed, 7u);
  EXPECT_EQ(c.link, LinkConfig{});
}

TEST(Config, UnknownKeyIsAnError) {
  try {
    parse("[link]\nlenAliceKmm = 3\n");
    FAIL() << "no error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "link.lenAliceKmm");
  }
  EXPECT_THROW(parse("[linkage]\nx = 1\n"), ConfigError);
}

TEST(Config, BadValueNamesField) {
  try {
    parse("[detectors]\neffD0 = lots\n");
    FAIL() << "no error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "detectors.effD0");
  }
  EXPECT_THROW(parse("[detectors]\neffD0 = 1.5\n"), ConfigError);
  EXPECT_THROW(parse("[run]\nN = 2.5\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/file.ini"), ConfigError);
}

TEST(Config, BalanceViolationIsReported) {
  const std::string text = "[protocol]\nalice_mu1 = 0.2\n";
  try {
    parse(text);
    FAIL() << "no error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "protocol.alice_mu1");
  }
  const ExperimentConfig c = parse(text + "allowUnbalanced = true\n");
  EXPECT_TRUE(c.allowUnbalanced);
}

TEST(Config, OutputDirectoryFromEnvironment) {
  ::unsetenv(kOutputDirEnv);
  EXPECT_EQ(resolve_output("a.txt"), std::filesystem::path("a.txt"));
  EXPECT_TRUE(resolve_output("").empty());
  ::setenv(kOutputDirEnv, "/tmp/snstf-out", 1);
  EXPECT_EQ(resolve_output("a.txt"), std::filesystem::path("/tmp/snstf-out/a.txt"));
  EXPECT_EQ(resolve_output("/abs/b.txt"), std::filesystem::path("/abs/b.txt"));
  ::unsetenv(kOutputDirEnv);
}

TEST(Presets, LossBudget) {
  EXPECT_NEAR(total_fiber_loss_db(preset("sym546").link), 100.13, 1e-9);
  EXPECT_NEAR(total_fiber_loss_db(preset("sym603").link), 108.59, 1e-9);
  EXPECT_NEAR(total_fiber_loss_db(preset("asym452").link), 84.62, 1e-9);
  EXPECT_THROW(preset("sym999"), ConfigError);
}

TEST(Presets, Sym603AsymptoticWithinFactorThree) {
  const KeyRateReport r = analytic_report(preset("sym603"), RateMode::kAsymptotic);
  EXPECT_GT(r.skr, 2.455e-10 / 3);
  EXPECT_LT(r.skr, 2.455e-10 * 3);
}

TEST(Presets, Sym546BeatsRepeaterlessBound) {
  const KeyRateReport r = analytic_report(preset("sym546"));
  EXPECT_GT(r.skr, r.skc0);
  EXPECT_GT(r.ratio, 1.0);
}

TEST(Presets, Asym452GivesKey) {
  EXPECT_GT(analytic_report(preset("asym452"), RateMode::kAsymptotic).skr, 0.0);
}

TEST(Presets, ZBasisCategoryRatio) {
  const ExperimentConfig c = preset("sym546");
  const ExpectedCounts e = expected_counts(session_config(c), c.run.N);
  const double r = e.at(Basis::kZ, Basis::kZ, 3, 3) / e.at(Basis::kZ, Basis::kZ, 0, 3);
  EXPECT_NEAR(r, 0.776, 0.15 * 0.776);
}

TEST(Sweep, RateFallsWithDistance) {
  const std::vector<double> d = {0, 100, 200, 300, 400, 500, 600};
  const auto rows = sweep(preset("sym546"), d, RateMode::kAsymptotic);
  ASSERT_EQ(rows.size(), d.size());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LE(rows[i].skrBitPerSignal, rows[i - 1].skrBitPerSignal);
    EXPECT_GT(rows[i].totalLossDb, rows[i - 1].totalLossDb);
  }
  EXPECT_NEAR(rows[6].totalLossDb, 600 * 0.183, 1e-9);
  std::ostringstream os;
  write_sweep(os, rows);
  EXPECT_EQ(os.str().rfind("distance_km,total_loss_db,skr_bit_per_signal,skr_bit_per_s,skc0_bit_per_signal,ratio\n", 0),
            0u);
  EXPECT_THROW(sweep(preset("sym546"), {10, 5}, RateMode::kAsymptotic), std::invalid_argument);
}

TEST(Sweep, DistanceSplitKeepsArmImbalance) {
  for (const auto& name : preset_names()) {
    const ExperimentConfig t = preset(name);
    const double want = arm_loss_db(t.link, Arm::kAlice) - arm_loss_db(t.link, Arm::kBob);
    const ExperimentConfig c = at_distance(t, 400);
    EXPECT_NEAR(c.link.lenAliceKm + c.link.lenBobKm, 400, 1e-9) << name;
    EXPECT_FALSE(c.link.measuredLossAliceDb.has_value());
    EXPECT_NEAR(arm_loss_db(c.link, Arm::kAlice) - arm_loss_db(c.link, Arm::kBob), want, 1e-9) << name;
  }
  // Too short to hold the imbalance: all fiber goes to one arm.
  const ExperimentConfig c = at_distance(preset("asym452"), 10);
  EXPECT_NEAR(c.link.lenAliceKm, 10, 1e-9);
  EXPECT_NEAR(c.link.lenBobKm, 0, 1e-9);
}

TEST(Sweep, FieldDistancesOnCalibratedLinks) {
  // Measured losses out, so only the extra losses tie back to the field.
  const auto r546 = sweep(preset("sym546"), {546.61}, RateMode::kAsymptotic);
  EXPECT_GT(r546[0].ratio, 1.0);
  const auto r603 = sweep(preset("sym603"), {603.87}, RateMode::kAsymptotic);
  EXPECT_GT(r603[0].skrBitPerSignal, 2.455e-10 / 3);
  EXPECT_LT(r603[0].skrBitPerSignal, 2.455e-10 * 3);
}

TEST(Optimizer, QuadraticPeak) {
  auto f = [](const std::vector<double>& x) { return -(x[0] - 0.3) * (x[0] - 0.3) - 2 * (x[1] - 0.7) * (x[1] - 0.7); };
  DescentOptions opt;
  opt.budget = 2000;
  const DescentResult r = coordinate_descent(f, {0.05, 0.2}, {1e-3, 1e-3}, {1, 1}, opt);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x[0], 0.3, 0.01);
  EXPECT_NEAR(r.x[1], 0.7, 0.01);
  EXPECT_THROW(coordinate_descent(f, {2, 0.5}, {1e-3, 1e-3}, {1, 1}, opt), std::invalid_argument);
}

TEST(Optimizer, RecoversPerturbedSignalIntensity) {
  ExperimentConfig base = preset("sym546");
  base.security.mode = RateMode::kAsymptotic;
  DescentOptions opt;
  const OptimizeResult ref = optimize(base, {FreeParam::kMuZ}, opt);
  ExperimentConfig off = base;
  off.partyA.muZ *= 1.5;
  off.partyB.muZ *= 1.5;
  const OptimizeResult r = optimize(off, {FreeParam::kMuZ}, opt);
  EXPECT_LT(r.templateSkr, ref.skr);
  EXPECT_NEAR(r.skr / ref.skr, 1.0, 0.05);
  EXPECT_NEAR(r.best.partyA.muZ / ref.best.partyA.muZ, 1.0, 0.05);
  EXPECT_EQ(r.best.partyA, r.best.partyB);
}

TEST(Optimizer, BudgetAndBalance) {
  const ExperimentConfig base = preset("asym452");
  DescentOptions opt;
  opt.budget = 0;
  const OptimizeResult none = optimize(base, all_free_params(), opt);
  EXPECT_EQ(none.evaluations, 0u);
  EXPECT_TRUE(none.budgetExhausted);
  EXPECT_EQ(none.skr, none.templateSkr);
  opt.budget = 30;
  const OptimizeResult some = optimize(base, all_free_params(), opt);
  EXPECT_EQ(some.evaluations, 30u);
  EXPECT_TRUE(some.budgetExhausted);
  EXPECT_GE(some.skr, some.templateSkr);
  EXPECT_LE(check_sns_constraint(some.best.partyA, some.best.partyB), 1e-9);
  EXPECT_NO_THROW(validate(some.best));
}

TEST(Verify, DefaultKernelPasses) {
  const VerifyReport r = verify();
  EXPECT_TRUE(r.passed());
  EXPECT_GE(r.checks.size(), 12u);
  std::ostringstream os;
  write_verify(os, r);
  EXPECT_NE(os.str().find("all identities hold"), std::string::npos);
}

TEST(Verify, TamperedKernelIsCaught) {
  VerifyKernel k;
  k.aoppMap = [](double e) { return 2 * e * (1 - e) + 2e-4; };
  EXPECT_FALSE(verify(k).passed());
  VerifyKernel k2;
  k2.plob = [](double l) { return 1.01 * plob_bound(l); };
  const VerifyReport r = verify(k2);
  EXPECT_FALSE(r.passed());
  int failed = 0;
  for (const auto& c : r.checks) failed += c.pass ? 0 : 1;
  EXPECT_EQ(failed, 3);
}
