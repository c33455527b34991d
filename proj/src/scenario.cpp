#include "supertrim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "supertrim/error.hpp"
#include "supertrim/rng.hpp"
#include "supertrim/semigroup.hpp"

namespace supertrim {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) throw ConfigError(field, "expected a number");
  return j.get<double>();
}

std::vector<double> numbers(const json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

Eigen::VectorXd vector_of(const json& j, const std::string& field, std::size_t n) {
  const auto v = numbers(j, field);
  if (v.size() != n) {
    throw ConfigError(field, "expected " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(n));
}

std::uint64_t unsigned_of(const json& j, const std::string& field) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
  throw ConfigError(field, "expected a nonnegative integer");
}

void reject_unknown(const json& block, const std::string& prefix, std::initializer_list<const char*> known) {
  for (const auto& item : block.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; })) {
      throw ConfigError(prefix + item.key(), "unknown key");
    }
  }
}

void parse_model(const json& m, ScenarioConfig& c) {
  if (!m.is_object()) throw ConfigError("model", "expected an object");
  reject_unknown(m, "model.", {"states", "Q", "alpha", "beta", "h", "mu", "f", "g"});
  for (const char* key : {"states", "Q", "alpha", "beta", "mu"}) {
    if (!m.contains(key)) throw ConfigError(std::string("model.") + key, "missing");
  }
  const auto n = unsigned_of(m["states"], "model.states");
  if (n == 0) throw ConfigError("model.states", "must be positive");
  c.states = n;
  const auto q = numbers(m["Q"], "model.Q");
  if (q.size() != n * n) {
    throw ConfigError("model.Q", "expected " + std::to_string(n * n) + " entries (row-major), got " +
                                     std::to_string(q.size()));
  }
  c.Q.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = q[i * n + j];
      c.Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      sum += v;
      if (i != j && v < 0.0) throw ConfigError("model.Q[" + std::to_string(i) + "]", "negative off-diagonal rate");
    }
    if (std::abs(sum) > 1e-10) {
      throw ConfigError("model.Q[" + std::to_string(i) + "]", "row sums to " + fmt(sum) + ", expected 0");
    }
  }
  c.alpha = Field(vector_of(m["alpha"], "model.alpha", n));
  if (c.alpha.min() < 0.0) throw ConfigError("model.alpha", "must be nonnegative");
  c.beta = Field(vector_of(m["beta"], "model.beta", n));
  c.mu = Measure(vector_of(m["mu"], "model.mu", n));
  if (c.mu.masses().minCoeff() < 0.0) throw ConfigError("model.mu", "must be nonnegative");
  if (m.contains("h")) {
    c.h = Field(vector_of(m["h"], "model.h", n));
    if (!c.h->all_positive()) throw ConfigError("model.h", "must be positive");
  }
  if (m.contains("f")) c.f = Field(vector_of(m["f"], "model.f", n));
  if (m.contains("g")) c.g = Field(vector_of(m["g"], "model.g", n));
  c.has_model = true;
}

void parse_run(const json& r, ScenarioConfig& c) {
  if (!r.is_object()) throw ConfigError("run", "expected an object");
  reject_unknown(r, "run.",
                 {"T", "N", "dt", "replicas", "seed", "time_grid", "horizon_R", "instances", "method", "threads"});
  if (!r.contains("seed")) throw ConfigError("run.seed", "missing (runs must be seeded)");
  c.seed = unsigned_of(r["seed"], "run.seed");
  if (r.contains("T")) c.T = number(r["T"], "run.T");
  if (!(c.T > 0.0)) throw ConfigError("run.T", "must be positive");
  if (r.contains("N")) {
    const auto N = unsigned_of(r["N"], "run.N");
    if (N == 0 || N > 1'000'000) throw ConfigError("run.N", "must be in [1, 1e6]");
    c.N = static_cast<std::uint32_t>(N);
  }
  if (r.contains("dt")) c.dt = number(r["dt"], "run.dt");
  if (c.dt < 0.0) throw ConfigError("run.dt", "must be nonnegative");
  if (r.contains("replicas")) c.replicas = unsigned_of(r["replicas"], "run.replicas");
  if (r.contains("time_grid")) {
    c.time_grid = numbers(r["time_grid"], "run.time_grid");
    for (std::size_t i = 0; i < c.time_grid.size(); ++i) {
      if (!(c.time_grid[i] > 0.0)) throw ConfigError("run.time_grid[" + std::to_string(i) + "]", "must be positive");
    }
  }
  if (r.contains("horizon_R")) c.horizon_R = number(r["horizon_R"], "run.horizon_R");
  if (c.horizon_R < 0.0) throw ConfigError("run.horizon_R", "must be nonnegative");
  if (r.contains("instances")) c.instances = unsigned_of(r["instances"], "run.instances");
  if (r.contains("method")) {
    if (!r["method"].is_string()) throw ConfigError("run.method", "expected a string");
    c.method = r["method"].get<std::string>();
    if (c.method != "particles" && c.method != "sde") throw ConfigError("run.method", "expected particles or sde");
  }
  if (r.contains("threads")) c.threads = static_cast<unsigned>(unsigned_of(r["threads"], "run.threads"));
}

void parse_output(const json& o, ScenarioConfig& c) {
  if (!o.is_object()) throw ConfigError("output", "expected an object");
  reject_unknown(o, "output.", {"dir", "genealogy"});
  if (o.contains("dir")) {
    if (!o["dir"].is_string()) throw ConfigError("output.dir", "expected a string");
    c.out_dir = o["dir"].get<std::string>();
  }
  if (o.contains("genealogy")) {
    if (!o["genealogy"].is_boolean()) throw ConfigError("output.genealogy", "expected a boolean");
    c.genealogy = o["genealogy"].get<bool>();
  }
}

// ---------------------------------------------------------------------------
// Generated instances

struct Instance {
  MotionCtmc motion;
  Field alpha;
  Field beta;
};

/// Irreducible random chain on 1..max_states states with alpha in
/// [alpha_lo, alpha_lo + 1.8] and beta in [beta_lo, beta_hi].
Instance random_instance(RngStream& rng, std::size_t max_states, double alpha_lo, double beta_lo, double beta_hi) {
  const auto n = static_cast<Eigen::Index>(1 + rng.below(max_states));
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) q(i, j) = 0.1 + 1.9 * rng.uniform();
    }
    q(i, i) = -q.row(i).sum();
  }
  Eigen::VectorXd a(n), b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a[i] = alpha_lo + 1.8 * rng.uniform();
    b[i] = beta_lo + (beta_hi - beta_lo) * rng.uniform();
  }
  return {MotionCtmc(q), Field(a), Field(b)};
}

Eigen::VectorXd random_vector(RngStream& rng, Eigen::Index n, double lo, double hi) {
  Eigen::VectorXd v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

std::string describe(const Instance& inst) {
  return "n=" + std::to_string(inst.motion.size()) + " alpha_min=" + fmt(inst.alpha.min()) +
         " beta_max=" + fmt(inst.beta.max());
}

/// Principal eigenvalue of Q + diag(beta); positive means supercritical.
double growth_rate(const MotionCtmc& motion, const Field& beta) {
  Eigen::MatrixXd a = motion.rates();
  a.diagonal() += beta.values();
  return a.eigenvalues().real().maxCoeff();
}

// ---------------------------------------------------------------------------
// 1 and 1.0 hash alike; count-valued keys stay integers.
void normalize_numbers(json& j, const std::string& key) {
  static const char* const kCounts[] = {"seed", "N", "replicas", "instances", "states", "threads"};
  if (j.is_structured()) {
    if (j.is_object()) {
      for (auto& item : j.items()) normalize_numbers(item.value(), item.key());
    } else {
      for (auto& v : j) normalize_numbers(v, key);
    }
    return;
  }
  const bool count = std::any_of(std::begin(kCounts), std::end(kCounts), [&](const char* k) { return key == k; });
  if (!count && (j.is_number_integer() || j.is_number_unsigned())) j = j.get<double>();
}

// Scenarios

VerifyOptions verify_options(const ScenarioConfig& c) {
  VerifyOptions o;
  o.seed = c.seed;
  o.replicas = c.replicas;
  o.N = c.N;
  o.threads = c.threads;
  return o;
}

void require_model(const ScenarioConfig& c) {
  if (!c.has_model) throw ConfigError("model", "scenario " + c.scenario + " needs a model block");
}

Field require_field(const std::optional<Field>& f, const char* field, const std::string& scenario) {
  if (!f) throw ConfigError(field, "scenario " + scenario + " needs this field");
  return *f;
}

std::vector<double> grid_or_T(const ScenarioConfig& c) {
  return c.time_grid.empty() ? std::vector<double>{c.T} : c.time_grid;
}

CouplingReport lemma12_bound(const ScenarioConfig& c) {
  CouplingReport report;
  const std::size_t count = c.instances > 0 ? c.instances : 100;
  std::size_t violations = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    RngStream rng(c.seed, k, Purpose::kInstances);
    const auto inst = random_instance(rng, 6, 0.2, -1.0, 2.0);
    const double a = inst.alpha.min();
    const double b = inst.beta.max();
    for (double t : {0.5, 2.0}) {
      const double bound = b == 0.0 ? 1.0 / (a * t) : b / (a * (1.0 - std::exp(-b * t)));
      const auto u = u_infinity(inst.motion, inst.alpha, inst.beta, t);
      double ratio = 0.0;
      for (std::size_t x = 0; x < u.value.size(); ++x) {
        ratio = std::max(ratio, u.infinite[x] ? HUGE_VAL : u.value[x] / bound);
      }
      worst = std::max(worst, ratio);
      // 1e-9 relative slack for the ODE tolerance.
      if (ratio > 1.0 + 1e-9) {
        ++violations;
        report.add_info("violation instance " + std::to_string(k) + " t=" + fmt(t), ratio, c.seed, 0, describe(inst));
      }
    }
  }
  report.add_flag("U_t(inf) above the extinction bound (t in {0.5, 2})", violations, c.seed, count,
                  std::to_string(count) + " instances, n <= 6, inf alpha >= 0.2");
  report.add_info("max ratio U_t(inf) / bound", worst, c.seed, count);
  return report;
}

CouplingReport prop7_fixed_point(const ScenarioConfig& c) {
  CouplingReport report;
  auto check = [&](const std::string& tag, const MotionCtmc& motion, const Field& alpha, const Field& beta) {
    const auto s = survival_p(motion, alpha, beta);
    report.add_value(tag + " residual ||Qp + beta p - alpha p^2||", s.residual, 1e-8, c.seed);
    report.add_value(tag + " max_t ||U_t p - p|| (t in {0.5, 1, 2})", s.fixed_point_error, 1e-7, c.seed);
    // Independent route: the log-Laplace flow from f = 1 run to a long horizon.
    const double horizon = 2.0 * s.warm_horizon;
    const auto ode = solve_loglaplace(motion, alpha, beta, Field::constant(motion.size(), 1.0), horizon);
    const double gap = (ode.value.values() - s.p.values()).cwiseAbs().maxCoeff();
    report.add_value(tag + " ||p_newton - U_T 1||", gap, 1e-6, c.seed, 0, "T=" + fmt(horizon));
  };
  if (c.has_model) check("configured", MotionCtmc(c.Q), c.alpha, c.beta);
  const std::size_t count = c.instances > 0 ? c.instances : (c.has_model ? 0 : 20);
  for (std::size_t k = 0, made = 0; made < count; ++k) {
    RngStream rng(c.seed, k, Purpose::kInstances);
    auto inst = random_instance(rng, 6, 0.2, -0.5, 2.0);
    if (growth_rate(inst.motion, inst.beta) <= 0.05) continue;
    check("instance " + std::to_string(made), inst.motion, inst.alpha, inst.beta);
    ++made;
  }
  return report;
}

CouplingReport weighted_identity(const ScenarioConfig& c) {
  CouplingReport report;
  if (c.has_model && c.h && c.f) {
    const double r = verify_weighted_identity(MotionCtmc(c.Q), c.alpha, c.beta, *c.h, *c.f, c.T);
    report.add_value("configured ||U^h_t f - U_t(hf)/h||", r, 1e-6, c.seed, 0, "t=" + fmt(c.T));
  }
  const std::size_t count = c.instances > 0 ? c.instances : (c.has_model ? 0 : 20);
  for (std::size_t k = 0; k < count; ++k) {
    RngStream rng(c.seed, k, Purpose::kInstances);
    const auto inst = random_instance(rng, 5, 0.1, -1.0, 1.5);
    const auto n = static_cast<Eigen::Index>(inst.motion.size());
    const Field h(random_vector(rng, n, 0.3, 2.0));
    const Field f(random_vector(rng, n, 0.0, 3.0));
    const double t = 0.1 + 2.9 * rng.uniform();
    const double r = verify_weighted_identity(inst.motion, inst.alpha, inst.beta, h, f, t);
    report.add_value("instance " + std::to_string(k) + " ||U^h_t f - U_t(hf)/h||", r, 1e-6, c.seed, 0,
                     describe(inst) + " t=" + fmt(t));
  }
  return report;
}

CouplingReport example32_flow(const ScenarioConfig& c) {
  CouplingReport report;
  const MotionFlow1D flow([](double x) { return 1.0 - x * x; });
  const double t = 200.0;
  const std::vector<double> interior = {-0.5, 0.0, 0.5, 0.9};

  // X: alpha = 1, beta = -x. p(-1) = 1, p = 0 inside.
  const ScalarFunction one = [](double) { return 1.0; };
  const ScalarFunction minus_x = [](double x) { return -x; };
  const auto x_edge = flow_u_infinity(flow, one, minus_x, -1.0, t);
  report.add_value("X: |p(-1) - 1|", x_edge.infinite ? HUGE_VAL : std::abs(x_edge.value - 1.0), 1e-3, c.seed);
  for (double x : interior) {
    const auto v = flow_u_infinity(flow, one, minus_x, x, t);
    report.add_value("X: p(" + fmt(x) + ")", v.infinite ? HUGE_VAL : v.value, 1e-3, c.seed);
  }

  // Y: alpha = beta = max(x, 0). p(-1) = infinity, p = 1 inside.
  const ScalarFunction pos = [](double x) { return std::max(x, 0.0); };
  const auto y_edge = flow_u_infinity(flow, pos, pos, -1.0, t);
  report.add_flag("Y: p(-1) flagged infinite", y_edge.infinite ? 0 : 1, c.seed, 0,
                  y_edge.infinite ? "" : "value=" + fmt(y_edge.value));
  for (double x : interior) {
    const auto v = flow_u_infinity(flow, pos, pos, x, t);
    report.add_value("Y: |p(" + fmt(x) + ") - 1|", v.infinite ? HUGE_VAL : std::abs(v.value - 1.0), 1e-2, c.seed);
  }
  report.add_info("horizon t", t);
  return report;
}

CouplingReport dispatch(const ScenarioConfig& c) {
  const auto& s = c.scenario;
  if (s == "lemma12-bound") return lemma12_bound(c);
  if (s == "prop7-fixed-point") return prop7_fixed_point(c);
  if (s == "weighted-identity") return weighted_identity(c);
  if (s == "example32-flow") return example32_flow(c);

  require_model(c);
  const auto model = c.model();
  const auto options = verify_options(c);
  const auto n = c.states;
  if (s == "lemma1-poissonization") return verify_poissonization(model, grid_or_T(c), options);
  if (s == "theorem6-embedding") {
    return verify_embedding(model, c.h.value_or(Field::constant(n, 1.0)), grid_or_T(c), options);
  }
  if (s == "theorem8-domination") {
    return verify_domination(model.motion, model.alpha, model.beta, require_field(c.h, "model.h", s));
  }
  if (s == "theorem9-trimmed-tree") return verify_trimmed_identity(model, grid_or_T(c), c.horizon_R, options);
  if (s == "corollary37-ancestors") return verify_ancestor_poisson(model, c.T, options);
  if (s == "lemma31-dichotomy") return verify_dichotomy(model, grid_or_T(c), options);
  if (s == "moments-check") {
    Eigen::VectorXd first = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    first[0] = 1.0;
    return verify_moments(model, c.f.value_or(Field::constant(n, 1.0)), c.g.value_or(Field(first)), c.T, options);
  }
  if (s == "girsanov-htransform") {
    return verify_girsanov(model.motion, require_field(c.h, "model.h", s), c.f.value_or(Field::constant(n, 1.0)),
                           c.T, c.replicas, c.seed);
  }
  throw ConfigError("scenario", "unknown scenario '" + s + "'");
}

}  // namespace

SuperModel ScenarioConfig::model() const {
  if (!has_model) throw ConfigError("model", "missing");
  return SuperModel{MotionCtmc(Q), alpha, beta, mu};
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {
      "lemma1-poissonization", "girsanov-htransform",   "weighted-identity",     "lemma12-bound",
      "prop7-fixed-point",     "example32-flow",        "corollary37-ancestors", "theorem6-embedding",
      "theorem8-domination",   "theorem9-trimmed-tree", "lemma31-dichotomy",     "moments-check"};
  return names;
}

ScenarioConfig parse_config(const std::string& json_text, const ConfigOverrides& overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<document>", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("<document>", "expected a JSON object");
  reject_unknown(doc, "", {"scenario", "model", "run", "output"});
  if (!doc.contains("run")) throw ConfigError("run", "missing");
  if (overrides.seed) doc["run"]["seed"] = *overrides.seed;
  if (overrides.replicas) doc["run"]["replicas"] = *overrides.replicas;
  if (overrides.scenario) doc["scenario"] = *overrides.scenario;
  if (overrides.out_dir) doc["output"]["dir"] = *overrides.out_dir;

  ScenarioConfig c;
  if (doc.contains("scenario")) {
    if (!doc["scenario"].is_string()) throw ConfigError("scenario", "expected a string");
    c.scenario = doc["scenario"].get<std::string>();
  }
  if (doc.contains("model")) parse_model(doc["model"], c);
  parse_run(doc["run"], c);
  if (doc.contains("output")) parse_output(doc["output"], c);
  // Keys are sorted by nlohmann::json; with numbers normalized the dump is canonical.
  json hashed = doc;
  hashed.erase("output");
  hashed["run"].erase("threads");
  normalize_numbers(hashed, "");
  c.canonical = hashed.dump();
  c.hash = fnv1a64(c.canonical);
  return c;
}

ScenarioConfig load_config(const std::string& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), overrides);
}

CouplingReport run_scenario(const ScenarioConfig& config) {
  const auto& names = scenario_names();
  if (std::find(names.begin(), names.end(), config.scenario) == names.end()) {
    throw ConfigError("scenario", "unknown scenario '" + config.scenario + "'");
  }
  auto report = dispatch(config);
  report.scenario = config.scenario;
  report.metadata.insert(report.metadata.begin(), {{"config_hash", hex64(config.hash)},
                                                   {"seed", std::to_string(config.seed)},
                                                   {"replicas", std::to_string(config.replicas)}});
  return report;
}

}  // namespace supertrim
