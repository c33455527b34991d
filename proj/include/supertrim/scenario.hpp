#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "supertrim/trim.hpp"

namespace supertrim {

/// Parsed scenario configuration (JSON). Unset optional keys fall back to
/// per-scenario defaults inside run_scenario.
struct ScenarioConfig {
  std::string scenario;

  // model block; absent for scenarios that only use generated instances.
  bool has_model = false;
  std::size_t states = 0;
  Eigen::MatrixXd Q;
  Field alpha;
  Field beta;
  std::optional<Field> h;
  Measure mu;
  std::optional<Field> f;
  std::optional<Field> g;

  // run block
  double T = 1.0;
  std::uint32_t N = 500;
  double dt = 0.0;
  std::size_t replicas = 1000;
  std::uint64_t seed = 0;
  std::vector<double> time_grid;
  /// 0 selects the automatic horizon.
  double horizon_R = 0.0;
  /// Generated instances for the algebraic scenarios; 0 = scenario default.
  std::size_t instances = 0;
  /// "particles" (default) or "sde" for cmd_simulate.
  std::string method = "particles";
  unsigned threads = 1;

  // output block
  std::string out_dir = "out";
  bool genealogy = false;

  /// Canonical serialization of the effective configuration and its FNV-1a hash.
  std::string canonical;
  std::uint64_t hash = 0;

  SuperModel model() const;
};

/// Command-line values that replace the corresponding config keys.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  std::optional<std::string> scenario;
  std::optional<std::string> out_dir;
};

/// Parses and validates a JSON document. Overrides are applied before
/// hashing, so the hash identifies the run actually performed; the output
/// block and run.threads do not affect results and are left out of the hash.
/// Throws ConfigError naming the offending key.
ScenarioConfig parse_config(const std::string& json_text, const ConfigOverrides& overrides = {});
ScenarioConfig load_config(const std::string& path, const ConfigOverrides& overrides = {});

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t value);

const std::vector<std::string>& scenario_names();

/// Runs a named verification. The report carries the scenario name, config
/// hash and seed as metadata; its text form is a pure function of the config.
CouplingReport run_scenario(const ScenarioConfig& config);

}  // namespace supertrim
