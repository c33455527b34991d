// supertrim: solve semigroups, simulate superprocess approximations and run
// the named verification scenarios from a JSON config.
//
// Exit codes: 0 pass, 1 statistical failure, 2 configuration error,
// 3 numerical-solver failure, 4 infeasible precondition, 5 cap exceeded.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "supertrim/error.hpp"
#include "supertrim/parallel.hpp"
#include "supertrim/scenario.hpp"
#include "supertrim/semigroup.hpp"
#include "supertrim/stats.hpp"
#include "supertrim/superproc.hpp"

namespace fs = std::filesystem;
using namespace supertrim;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kPass = 0, kStatFail = 1, kConfig = 2, kSolver = 3, kPrecondition = 4, kCap = 5 };

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Output {
 public:
  Output(const ScenarioConfig& config, std::string command) : config_(config), command_(std::move(command)) {
    std::error_code ec;
    fs::create_directories(config.out_dir, ec);
    if (ec) throw ConfigError("output.dir", "cannot create " + config.out_dir + ": " + ec.message());
  }

  std::ofstream open(const std::string& name) {
    const auto path = fs::path(config_.out_dir) / name;
    std::ofstream out(path);
    if (!out) throw ConfigError("output.dir", "cannot write " + path.string());
    files_.push_back(name);
    return out;
  }

  /// '#' header lines shared by every CSV file.
  void stamp(std::ostream& out) const {
    out << "# config_hash=" << hex64(config_.hash) << "\n# seed=" << config_.seed << '\n';
  }

  void time(const std::string& phase, double ms) { timings_.emplace_back(phase, ms); }

  void manifest(int exit_code) {
    nlohmann::ordered_json m;
    m["command"] = command_;
    m["scenario"] = config_.scenario;
    m["config_hash"] = hex64(config_.hash);
    m["seed"] = config_.seed;
    m["replicas"] = config_.replicas;
    m["version"] = kVersion;
    m["exit_code"] = exit_code;
    m["files"] = files_;
    nlohmann::ordered_json t = nlohmann::ordered_json::object();
    for (const auto& [phase, ms] : timings_) t[phase] = ms;
    m["timings_ms"] = t;
    m["config"] = nlohmann::json::parse(config_.canonical);
    std::ofstream out(fs::path(config_.out_dir) / "run_manifest.json");
    out << m.dump(2) << '\n';
  }

 private:
  const ScenarioConfig& config_;
  std::string command_;
  std::vector<std::string> files_;
  std::vector<std::pair<std::string, double>> timings_;
};

class Stopwatch {
 public:
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_column(Output& out, const std::string& name, const Field& v, const std::vector<bool>* infinite = nullptr) {
  auto f = out.open(name);
  out.stamp(f);
  f << "state,value\n";
  for (std::size_t x = 0; x < v.size(); ++x) {
    f << x << ',' << (infinite && (*infinite)[x] ? std::string("inf") : num(v[x])) << '\n';
  }
}

nlohmann::ordered_json json_column(const Field& v, const std::vector<bool>* infinite = nullptr) {
  auto arr = nlohmann::ordered_json::array();
  for (std::size_t x = 0; x < v.size(); ++x) {
    if (infinite && (*infinite)[x]) {
      arr.push_back("inf");
    } else {
      arr.push_back(v[x]);
    }
  }
  return arr;
}

int cmd_solve(const ScenarioConfig& c, const std::string& format) {
  if (!c.has_model) throw ConfigError("model", "solve needs a model block");
  Output out(c, "solve");
  const MotionCtmc motion(c.Q);
  const Field f = c.f.value_or(Field::constant(c.states, 1.0));

  Stopwatch sw;
  const auto utf = solve_loglaplace(motion, c.alpha, c.beta, f, c.T);
  const auto uinf = u_infinity(motion, c.alpha, c.beta, c.T);
  std::optional<Field> p;
  if (c.alpha.all_positive()) p = survival_p(motion, c.alpha, c.beta).p;
  std::optional<Field> gamma;
  if (c.h) gamma = gamma_from_h(motion, c.alpha, c.beta, *c.h);
  out.time("solve", sw.ms());

  if (format == "json") {
    nlohmann::ordered_json j;
    j["config_hash"] = hex64(c.hash);
    j["seed"] = c.seed;
    j["t"] = c.T;
    j["U_t_f"] = json_column(utf.value);
    j["U_t_inf"] = json_column(uinf.value, &uinf.infinite);
    if (p) j["p"] = json_column(*p);
    if (gamma) j["gamma"] = json_column(*gamma);
    out.open("solve.json") << j.dump(2) << '\n';
  } else {
    write_column(out, "U_t_f.csv", utf.value);
    write_column(out, "U_t_inf.csv", uinf.value, &uinf.infinite);
    if (p) write_column(out, "p.csv", *p);
    if (gamma) write_column(out, "gamma.csv", *gamma);
  }
  out.manifest(kPass);
  return kPass;
}

int cmd_simulate(const ScenarioConfig& c, const std::string& format) {
  if (!c.has_model) throw ConfigError("model", "simulate needs a model block");
  Output out(c, "simulate");
  const auto model = c.model();
  const auto n = c.states;
  std::vector<double> times = c.time_grid;
  times.push_back(c.T);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  if (times.back() > c.T) throw ConfigError("run.time_grid", "times must not exceed run.T");

  Stopwatch sw;
  // masses[i][k] = X at times[k] in replica i.
  std::vector<std::vector<Measure>> masses(c.replicas);
  std::vector<std::optional<Genealogy>> logs(c.replicas);
  if (c.method == "sde") {
    if (!(c.dt > 0.0)) throw ConfigError("run.dt", "method sde needs dt > 0");
    for_each_replica(c.replicas, c.threads, [&](std::size_t i) {
      RngStream rng(c.seed, i, Purpose::kDiffusion);
      masses[i] = simulate_super_sde(model.motion, model.alpha, model.beta, model.mu, c.dt, c.T, rng, times).values;
    });
  } else {
    SuperConfig cfg;
    cfg.N = c.N;
    cfg.T = c.T;
    cfg.time_grid = times;
    cfg.record_ancestry = false;
    cfg.record_genealogy = c.genealogy;
    const SuperSimulator sim(model.motion, model.alpha, model.beta, model.mu, cfg);
    for_each_replica(c.replicas, c.threads, [&](std::size_t i) {
      RngStream rng(c.seed, i, Purpose::kDynamics);
      try {
        auto traj = sim.run(rng);
        for (double t : times) masses[i].push_back(traj.masses.at(static_cast<std::size_t>(traj.time_index(t))));
        if (traj.genealogy) logs[i] = std::move(traj.genealogy);
      } catch (const CapExceeded& e) {
        throw CapExceeded("replica " + std::to_string(i) + ": " + e.what());
      }
    });
  }
  out.time("simulate", sw.ms());

  // Mean total mass against <mu, V_t 1>.
  std::vector<Estimate> means;
  std::vector<double> reference;
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> totals(c.replicas);
    for (std::size_t i = 0; i < c.replicas; ++i) totals[i] = masses[i][k].total();
    means.push_back(estimate_mean(totals));
    reference.push_back(model.mu.integrate(linear_moment(model.motion, model.beta, Field::constant(n, 1.0), times[k])));
  }

  if (format == "json") {
    nlohmann::ordered_json j;
    j["config_hash"] = hex64(c.hash);
    j["seed"] = c.seed;
    j["method"] = c.method;
    j["times"] = times;
    auto summary = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < times.size(); ++k) {
      summary.push_back({{"time", times[k]}, {"mean_total", means[k].mean}, {"se", means[k].se},
                         {"reference", reference[k]}});
    }
    j["summary"] = summary;
    auto reps = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < c.replicas; ++i) {
      auto rows = nlohmann::ordered_json::array();
      for (const auto& m : masses[i]) rows.push_back(std::vector<double>(m.masses().begin(), m.masses().end()));
      reps.push_back(rows);
    }
    j["masses"] = reps;
    out.open("simulate.json") << j.dump(2) << '\n';
  } else {
    auto f = out.open("masses.csv");
    out.stamp(f);
    f << "replica,time,total";
    for (std::size_t x = 0; x < n; ++x) f << ",x" << x;
    f << '\n';
    for (std::size_t i = 0; i < c.replicas; ++i) {
      for (std::size_t k = 0; k < times.size(); ++k) {
        f << i << ',' << num(times[k]) << ',' << num(masses[i][k].total());
        for (std::size_t x = 0; x < n; ++x) f << ',' << num(masses[i][k][x]);
        f << '\n';
      }
    }
    auto s = out.open("summary.csv");
    out.stamp(s);
    s << "time,mean_total,se,reference\n";
    for (std::size_t k = 0; k < times.size(); ++k) {
      s << num(times[k]) << ',' << num(means[k].mean) << ',' << num(means[k].se) << ',' << num(reference[k]) << '\n';
    }
  }
  for (std::size_t i = 0; i < c.replicas; ++i) {
    if (!logs[i]) continue;
    auto g = out.open("genealogy_" + std::to_string(i) + ".csv");
    write_event_log(g, *logs[i],
                    {"config_hash=" + hex64(c.hash), "seed=" + std::to_string(c.seed), "replica=" + std::to_string(i),
                     "N=" + std::to_string(c.N)});
  }
  out.manifest(kPass);
  return kPass;
}

int cmd_verify(const ScenarioConfig& c, const std::string& format) {
  Output out(c, "verify");
  Stopwatch sw;
  const auto report = run_scenario(c);
  out.time("verify", sw.ms());
  if (format == "json") {
    out.open("report.json") << report.to_json();
  } else {
    out.open("report.txt") << report.to_text();
  }
  std::cout << report.to_text();
  const int code = report.passed() ? kPass : kStatFail;
  out.manifest(code);
  return code;
}

int fail(int code, const std::string& kind, const std::string& message) {
  std::cerr << "supertrim: " << kind << ": " << message << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Superprocess Poissonization and trimmed-tree verification"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  std::optional<std::string> out_dir;
  std::optional<std::string> scenario;
  std::string format = "csv";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override run.seed");
    sub->add_option("--replicas", replicas, "Override run.replicas");
    sub->add_option("--out", out_dir, "Override output.dir");
    sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  };
  auto* solve = app.add_subcommand("solve", "U_t f, U_t(inf), p and gamma as CSV");
  add_common(solve);
  auto* simulate = app.add_subcommand("simulate", "Mass time series of the particle approximation or the SDE");
  add_common(simulate);
  auto* verify = app.add_subcommand("verify", "Run a named verification scenario");
  add_common(verify);
  verify->add_option("--scenario", scenario, "Scenario name (overrides the config)")
      ->check(CLI::IsMember(scenario_names()));
  auto* list = app.add_subcommand("list", "List scenario names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfig;
  }

  if (list->parsed()) {
    for (const auto& name : scenario_names()) std::cout << name << '\n';
    return kPass;
  }

  try {
    const auto config = load_config(config_path, {seed, replicas, scenario, out_dir});
    if (solve->parsed()) return cmd_solve(config, format);
    if (simulate->parsed()) return cmd_simulate(config, format);
    return cmd_verify(config, format);
  } catch (const ConfigError& e) {
    return fail(kConfig, "configuration error", e.what());
  } catch (const DomainError& e) {
    return fail(kConfig, "invalid model", e.what());
  } catch (const PreconditionError& e) {
    return fail(kPrecondition, "precondition not met", e.what());
  } catch (const CapExceeded& e) {
    return fail(kCap, "cap exceeded", e.what());
  } catch (const SolverError& e) {
    return fail(kSolver, "solver failure", e.what());
  } catch (const std::exception& e) {
    return fail(kSolver, "error", e.what());
  }
}
