// Command-line front end.  Exit codes: 0 success (including runs with no
// key), 1 verify failure, 2 configuration or usage error, 3 runtime error.
#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "snstf/snstf.hpp"

namespace {

using namespace snstf;

constexpr int kExitVerifyFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonOptions {
  std::string config;
  std::string preset;
  std::optional<double> windows;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> chunks;
  std::string mode;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool runFlags) {
  cmd->add_option("--config", o.config, "INI config file (overrides the preset)");
  cmd->add_option("--preset", o.preset, "start from a named preset");
  cmd->add_option("--mode", o.mode, "asymptotic or finite")->check(CLI::IsMember({"asymptotic", "finite"}));
  cmd->add_option("--out", o.out, "output file (relative paths go under $SNSTF_OUTPUT_DIR)");
  if (runFlags) {
    cmd->add_option("--windows", o.windows, "number of windows N");
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("--chunks", o.chunks, "chunk count");
  }
}

ExperimentConfig build_config(const CommonOptions& o) {
  ExperimentConfig c = o.preset.empty() ? ExperimentConfig{} : preset(o.preset);
  if (!o.config.empty()) c = load_config(o.config, c);
  if (o.windows) c.run.N = *o.windows;
  if (o.seed) c.run.seed = *o.seed;
  if (o.chunks) c.run.chunkCount = *o.chunks;
  if (!o.mode.empty()) c.security.mode = parse_rate_mode(o.mode);
  if (!o.out.empty()) c.run.outputPath = o.out;
  validate(c);
  return c;
}

// Writes to the resolved output path, or stdout when none is set.
void emit(const ExperimentConfig& c, const std::string& text) {
  const auto path = resolve_output(c.run.outputPath);
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
  std::cerr << "wrote " << path.string() << '\n';
}

std::vector<double> parse_distances(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sending-or-not-sending twin-field QKD simulator and analysis bench"};
  app.require_subcommand(1);

  auto* verifyCmd = app.add_subcommand("verify", "run the built-in identity suite");

  CommonOptions keyOpt;
  auto* keyCmd = app.add_subcommand("keyrate", "analytic key rate from expected counts");
  add_common(keyCmd, keyOpt, true);

  CommonOptions simOpt;
  std::string sampler = "auto";
  auto* simCmd = app.add_subcommand("simulate", "Monte Carlo session and post-processing");
  add_common(simCmd, simOpt, true);
  simCmd->add_option("--sampler", sampler, "auto, every-window or heralded-only")
      ->check(CLI::IsMember({"auto", "every-window", "heralded-only"}));

  CommonOptions stabOpt;
  double duration = 30.0;
  std::string stages = "full";
  std::string series;
  std::uint64_t sampleEvery = 100;
  auto* stabCmd = app.add_subcommand("stabilize", "phase stabilization run");
  add_common(stabCmd, stabOpt, true);
  stabCmd->add_option("--duration", duration, "simulated seconds")->check(CLI::PositiveNumber);
  stabCmd->add_option("--stages", stages, "none, fastOnly or full")->check(CLI::IsMember({"none", "fastOnly", "full"}));
  stabCmd->add_option("--series", series, "write the time series to this file");
  stabCmd->add_option("--sample-every", sampleEvery, "fast cycles between series rows")->check(CLI::PositiveNumber);

  CommonOptions sweepOpt;
  std::string distances;
  auto* sweepCmd = app.add_subcommand("sweep", "key rate against distance");
  add_common(sweepCmd, sweepOpt, true);
  sweepCmd->add_option("--distances", distances, "comma-separated total distances in km")->required();

  CommonOptions optOpt;
  std::uint64_t budget = 400;
  auto* optCmd = app.add_subcommand("optimize", "coordinate-descent search over encoding parameters");
  add_common(optCmd, optOpt, true);
  optCmd->add_option("--budget", budget, "objective evaluations");

  auto* presetCmd = app.add_subcommand("preset", "list or show presets");
  presetCmd->require_subcommand(1);
  auto* presetList = presetCmd->add_subcommand("list", "list preset names");
  std::string showName;
  auto* presetShow = presetCmd->add_subcommand("show", "print a preset as a config file");
  presetShow->add_option("name", showName)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*verifyCmd) {
      const VerifyReport r = verify();
      write_verify(std::cout, r);
      return r.passed() ? 0 : kExitVerifyFailed;
    }
    if (*keyCmd) {
      const ExperimentConfig c = build_config(keyOpt);
      std::ostringstream os;
      write_keyrate_report(os, c, analytic_report(c));
      emit(c, os.str());
    } else if (*simCmd) {
      const ExperimentConfig c = build_config(simOpt);
      SessionOptions so;
      so.sampler = sampler == "every-window"    ? Sampler::kEveryWindow
                   : sampler == "heralded-only" ? Sampler::kHeraldedOnly
                                                : Sampler::kAuto;
      std::ostringstream os;
      write_simulation_report(os, c, run_simulation(c, so));
      emit(c, os.str());
    } else if (*stabCmd) {
      const ExperimentConfig c = build_config(stabOpt);
      const Stages st = parse_stages(stages);
      const StabilizationResult r =
          run_stabilization(duration, c.noise, c.loop, st, c.run.seed, series.empty() ? 0 : sampleEvery);
      if (!series.empty()) {
        const auto path = resolve_output(series);
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
        write_time_series(f, r.series);
      }
      std::ostringstream os;
      write_stabilization_report(os, c, duration, st, r.summary);
      emit(c, os.str());
    } else if (*sweepCmd) {
      const ExperimentConfig c = build_config(sweepOpt);
      std::ostringstream os;
      write_sweep(os, sweep(c, parse_distances(distances), c.security.mode));
      emit(c, os.str());
    } else if (*optCmd) {
      const ExperimentConfig c = build_config(optOpt);
      DescentOptions d;
      d.budget = budget;
      d.seed = c.run.seed;
      const OptimizeResult r = optimize(c, all_free_params(), d);
      std::ostringstream os;
      os << "# optimize report\n"
         << "template_skr = " << r.templateSkr << '\n'
         << "best_skr = " << r.skr << '\n'
         << "evaluations = " << r.evaluations << '\n'
         << "budget_exhausted = " << (r.budgetExhausted ? "true" : "false") << "\n\n";
      write_config(os, r.best);
      emit(c, os.str());
    } else if (*presetCmd) {
      if (*presetList) {
        for (const auto& n : preset_names()) std::cout << n << '\n';
      } else if (*presetShow) {
        write_config(std::cout, preset(showName));
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
