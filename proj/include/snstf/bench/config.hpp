// Experiment configuration: one INI file with sections link, detectors,
// protocol, noise, servo, security and run.  Keys are the field names of
// the corresponding structs; per-user protocol keys carry an alice_ or
// bob_ prefix.
#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "snstf/engine.hpp"
#include "snstf/optics.hpp"
#include "snstf/ratecore.hpp"
#include "snstf/servo.hpp"

namespace snstf {

/// Largest accepted deviation from the intensity-balance condition unless
/// the config opts out.
inline constexpr double kMaxSnsDeviation = 0.05;

struct RunSettings {
  double N = 1e8;  // windows; a double so field-scale sessions fit
  std::uint64_t seed = 1;
  unsigned chunkCount = 1;
  std::string outputPath;

  bool operator==(const RunSettings&) const = default;
};

struct ExperimentConfig {
  std::string name = "custom";
  LinkConfig link;
  DetectorModel detectors;
  PartySettings partyA;
  PartySettings partyB;
  bool allowUnbalanced = false;
  NoiseModel noise;
  LoopConfig loop;
  SecuritySettings security;
  RunSettings run;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Bad file or bad value.  `field` is the section.key path when known.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error(field.empty() ? what : field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

inline SessionConfig session_config(const ExperimentConfig& c) {
  return {c.link, c.detectors, c.noise, c.partyA, c.partyB};
}

/// Runs every validator; the first failure is reported with its section.
inline void validate(const ExperimentConfig& c) {
  auto guard = [](const char* section, auto&& f) {
    try {
      f();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(section, e.what());
    } catch (const std::domain_error& e) {
      throw ConfigError(section, e.what());
    }
  };
  guard("link", [&] { validate(c.link); });
  guard("detectors", [&] { validate(c.detectors); });
  guard("protocol", [&] {
    validate(c.partyA, "alice");
    validate(c.partyB, "bob");
  });
  guard("noise", [&] { validate(c.noise); });
  guard("servo", [&] { validate(c.loop); });
  guard("security", [&] { validate(c.security); });
  if (!(c.run.N >= 0.0) || c.run.N != std::floor(c.run.N)) throw ConfigError("run.N", "must be a whole number >= 0");
  if (c.run.chunkCount < 1) throw ConfigError("run.chunkCount", "must be >= 1");
  if (!c.allowUnbalanced) {
    double dev = 0.0;
    guard("protocol", [&] { dev = check_sns_constraint(c.partyA, c.partyB); });
    if (dev > kMaxSnsDeviation) {
      std::ostringstream os;
      os << "intensity-balance deviation " << dev << " exceeds " << kMaxSnsDeviation
         << " (set allowUnbalanced = true to override)";
      throw ConfigError("protocol.alice_mu1", os.str());
    }
  }
}

namespace detail {

// One table drives parsing and serialization so the two cannot drift.
template <class F>
void visit_fields(ExperimentConfig& c, F&& f) {
  f("link", "lenAliceKm", c.link.lenAliceKm);
  f("link", "lenBobKm", c.link.lenBobKm);
  f("link", "attenDbPerKm", c.link.attenDbPerKm);
  f("link", "extraLossAliceDb", c.link.extraLossAliceDb);
  f("link", "extraLossBobDb", c.link.extraLossBobDb);
  f("link", "measuredLossAliceDb", c.link.measuredLossAliceDb);
  f("link", "measuredLossBobDb", c.link.measuredLossBobDb);

  f("detectors", "effD0", c.detectors.effD0);
  f("detectors", "effD1", c.detectors.effD1);
  f("detectors", "darkD0Hz", c.detectors.darkD0Hz);
  f("detectors", "darkD1Hz", c.detectors.darkD1Hz);
  f("detectors", "windowNs", c.detectors.windowNs);

  for (auto [prefix, p] : {std::pair{"alice_", &c.partyA}, std::pair{"bob_", &c.partyB}}) {
    const std::string s(prefix);
    f("protocol", s + "muZ", p->muZ);
    f("protocol", s + "mu2", p->mu2);
    f("protocol", s + "mu1", p->mu1);
    f("protocol", s + "mu0", p->mu0);
    f("protocol", s + "pSignalWindow", p->pSignalWindow);
    f("protocol", s + "epsilonSend", p->epsilonSend);
    f("protocol", s + "pMu0", p->pMu0);
    f("protocol", s + "pMu1", p->pMu1);
    f("protocol", s + "pMu2", p->pMu2);
  }
  f("protocol", "allowUnbalanced", c.allowUnbalanced);

  f("noise", "freeDriftRateStd", c.noise.freeDriftRateStd);
  f("noise", "driftCorrelationS", c.noise.driftCorrelationS);
  f("noise", "laserDriftHzPerHour", c.noise.laserDriftHzPerHour);
  f("noise", "laserWanderHz", c.noise.laserWanderHz);
  f("noise", "clockAccuracy", c.noise.clockAccuracy);
  f("noise", "combSpanGHz", c.noise.combSpanGHz);
  f("noise", "lambdaQnm", c.noise.lambdaQnm);
  f("noise", "lambdaCnm", c.noise.lambdaCnm);
  f("noise", "visibility", c.noise.visibility);
  f("noise", "timingJitterPs", c.noise.timingJitterPs);
  f("noise", "pulseWidthPs", c.noise.pulseWidthPs);
  f("noise", "diurnalDelayNs", c.noise.diurnalDelayNs);
  f("noise", "residualPhaseStdRad", c.noise.residualPhaseStdRad);

  f("servo", "fastKp", c.loop.fastGains.kp);
  f("servo", "fastKi", c.loop.fastGains.ki);
  f("servo", "fastKd", c.loop.fastGains.kd);
  f("servo", "slowKp", c.loop.slowGains.kp);
  f("servo", "slowKi", c.loop.slowGains.ki);
  f("servo", "slowKd", c.loop.slowGains.kd);
  f("servo", "dcTargetCountsHz", c.loop.dcTargetCountsHz);
  f("servo", "refCountsHz", c.loop.refCountsHz);
  f("servo", "pmRangeRad", c.loop.pmRangeRad);
  f("servo", "fsRangeRad", c.loop.fsRangeRad);
  f("servo", "fsMaxSlewRadPerS", c.loop.fsMaxSlewRadPerS);
  f("servo", "fsBlankingS", c.loop.fsBlankingS);

  f("security", "f", c.security.f);
  f("security", "epsCor", c.security.epsCor);
  f("security", "epsPA", c.security.epsPA);
  f("security", "epsHat", c.security.epsHat);
  f("security", "epsPE", c.security.epsPE);
  f("security", "mode", c.security.mode);

  f("run", "name", c.name);
  f("run", "N", c.run.N);
  f("run", "seed", c.run.seed);
  f("run", "chunkCount", c.run.chunkCount);
  f("run", "outputPath", c.run.outputPath);
}

inline std::string format_value(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}
inline std::string format_value(bool v) { return v ? "true" : "false"; }
inline std::string format_value(std::uint64_t v) { return std::to_string(v); }
inline std::string format_value(unsigned v) { return std::to_string(v); }
inline std::string format_value(const std::string& v) { return v; }
inline std::string format_value(RateMode m) { return to_string(m); }

inline void parse_value(const std::string& s, double& out) {
  std::size_t used = 0;
  out = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing characters");
}
inline void parse_value(const std::string& s, bool& out) {
  if (s == "true" || s == "1") out = true;
  else if (s == "false" || s == "0") out = false;
  else throw std::invalid_argument("expected true or false");
}
inline void parse_value(const std::string& s, std::uint64_t& out) {
  if (s.empty() || s[0] == '-') throw std::invalid_argument("expected a nonnegative integer");
  std::size_t used = 0;
  out = std::stoull(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing characters");
}
inline void parse_value(const std::string& s, unsigned& out) {
  std::uint64_t v = 0;
  parse_value(s, v);
  if (v > 1'000'000) throw std::invalid_argument("out of range");
  out = static_cast<unsigned>(v);
}
inline void parse_value(const std::string& s, std::string& out) { out = s; }
inline void parse_value(const std::string& s, RateMode& out) { out = parse_rate_mode(s); }

}  // namespace detail

/// Parses INI text.  Missing keys keep their defaults; unknown sections or
/// keys are errors so typos do not pass silently.
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("", std::string("parse error: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  std::map<std::string, bool> known;
  detail::visit_fields(base, [&](const std::string& sec, const std::string& key, auto& field) {
    const std::string path = sec + "." + key;
    known[path] = true;
    const auto sub = tree.get_child_optional(pt::ptree::path_type(sec, '/'));
    if (!sub) return;
    const auto v = sub->get_optional<std::string>(pt::ptree::path_type(key, '/'));
    if (!v) return;
    try {
      using T = std::decay_t<decltype(field)>;
      if constexpr (std::is_same_v<T, std::optional<double>>) {
        if (v->empty() || *v == "none") field.reset();
        else {
          double x = 0;
          detail::parse_value(*v, x);
          field = x;
        }
      } else {
        detail::parse_value(*v, field);
      }
    } catch (const std::exception& e) {
      throw ConfigError(path, "cannot parse '" + *v + "' (" + e.what() + ")");
    }
  });
  for (const auto& [sec, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError(sec, "key outside any section");
    for (const auto& [key, val] : body)
      if (!known.count(sec + "." + key)) throw ConfigError(sec + "." + key, "unknown key");
  }
  validate(base);
  return base;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path.string() + "'");
  return parse_config(in, std::move(base));
}

/// Full, normalized echo of a config; parse_config(write_config(c)) == c.
inline void write_config(std::ostream& os, const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  std::string section;
  detail::visit_fields(c, [&](const std::string& sec, const std::string& key, auto& field) {
    if (sec != section) {
      os << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
    }
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<T, std::optional<double>>)
      os << key << " = " << (field ? detail::format_value(*field) : std::string("none")) << '\n';
    else
      os << key << " = " << detail::format_value(field) << '\n';
  });
}

/// Environment variable naming the default directory for run output.
inline constexpr const char* kOutputDirEnv = "SNSTF_OUTPUT_DIR";

/// Resolves where a run writes: an explicit path wins; a relative path is
/// placed under $SNSTF_OUTPUT_DIR when that is set.
inline std::filesystem::path resolve_output(const std::string& requested) {
  if (requested.empty()) return {};
  std::filesystem::path p(requested);
  if (p.is_absolute()) return p;
  if (const char* dir = std::getenv(kOutputDirEnv); dir && *dir) return std::filesystem::path(dir) / p;
  return p;
}

}  // namespace snstf
