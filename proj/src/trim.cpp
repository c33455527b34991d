#include "supertrim/trim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "supertrim/error.hpp"
#include "supertrim/parallel.hpp"

namespace supertrim {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string time_tag(double t) { return "t=" + fmt(t); }

std::vector<double> sorted_grid(std::vector<double> grid) {
  if (grid.empty()) throw DomainError("time grid must be nonempty");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.front() < 0.0) throw DomainError("time grid entries must be >= 0");
  return grid;
}

Field ones(std::size_t n) { return Field::constant(n, 1.0); }

// Distinct random nonempty subsets of the state space (each state kept with
// probability 1/2); fewer than `count` when the space has fewer subsets.
std::vector<std::vector<StateIndex>> random_subsets(std::size_t n, std::size_t count, std::uint64_t seed) {
  RngStream rng(seed, 0, Purpose::kSubsets);
  if (n < 20) count = std::min<std::size_t>(count, (std::size_t{1} << n) - 1);
  std::vector<std::vector<StateIndex>> out;
  while (out.size() < count) {
    std::vector<StateIndex> s;
    for (std::size_t x = 0; x < n; ++x) {
      if (rng.uniform() < 0.5) s.push_back(static_cast<StateIndex>(x));
    }
    if (!s.empty() && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
  }
  return out;
}

std::string subset_name(const std::vector<StateIndex>& s) {
  std::string name = "{";
  for (std::size_t i = 0; i < s.size(); ++i) name += (i ? "," : "") + std::to_string(s[i]);
  return name + "}";
}

std::vector<double> to_doubles(const std::vector<std::int64_t>& v) { return {v.begin(), v.end()}; }

// Per grid time and state, count samples of a point-measure-valued sample.
struct CountTable {
  // counts[k][x][replica]
  std::vector<std::vector<std::vector<std::int64_t>>> counts;
  // totals[k][replica]
  std::vector<std::vector<std::int64_t>> totals;

  CountTable(std::size_t grid, std::size_t states, std::size_t replicas)
      : counts(grid, std::vector<std::vector<std::int64_t>>(states, std::vector<std::int64_t>(replicas, 0))),
        totals(grid, std::vector<std::int64_t>(replicas, 0)) {}

  void put(std::size_t k, std::size_t replica, const std::vector<std::int64_t>& c) {
    std::int64_t total = 0;
    for (std::size_t x = 0; x < c.size(); ++x) {
      counts[k][x][replica] = c[x];
      total += c[x];
    }
    totals[k][replica] = total;
  }

  std::size_t voids(std::size_t k, const std::vector<StateIndex>& subset) const {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < totals[k].size(); ++r) {
      std::int64_t in = 0;
      for (auto x : subset) in += counts[k][x][r];
      if (in == 0) ++hits;
    }
    return hits;
  }
};

// Distributional comparison of two count tables: totals, per-state counts and
// (optionally) void probabilities, Bonferroni over everything added.
void compare_tables(CouplingReport& report, const CountTable& a, const CountTable& b,
                    const std::vector<double>& grid, const std::vector<std::vector<StateIndex>>& subsets,
                    const VerifyOptions& options) {
  const std::size_t states = a.counts.empty() ? 0 : a.counts.front().size();
  const std::size_t per_time = 1 + states + subsets.size();
  const double adjusted = options.level / double(grid.size() * per_time);
  const auto reps = a.totals.front().size();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto tag = time_tag(grid[k]);
    report.add_test(two_sample_histogram("total count " + tag, a.totals[k], b.totals[k], adjusted), adjusted,
                    options.seed, reps);
    for (std::size_t x = 0; x < states; ++x) {
      report.add_test(two_sample_histogram("state " + std::to_string(x) + " count " + tag, a.counts[k][x],
                                           b.counts[k][x], adjusted),
                      adjusted, options.seed, reps);
    }
    for (const auto& s : subsets) {
      report.add_test(two_proportion_test("void " + subset_name(s) + " " + tag, a.voids(k, s), reps, b.voids(k, s),
                                          b.totals[k].size(), adjusted),
                      adjusted, options.seed, reps);
    }
  }
}

SuperConfig super_config(const VerifyOptions& options, double T, std::vector<double> grid) {
  SuperConfig cfg;
  cfg.N = options.N;
  cfg.T = T;
  cfg.time_grid = std::move(grid);
  cfg.limits = options.limits;
  return cfg;
}

std::vector<std::int64_t> measure_counts(const PointMeasure& nu) { return nu.counts(); }

void rethrow_with_replica(std::size_t replica, const CapExceeded& e) {
  throw CapExceeded("replica " + std::to_string(replica) + ": " + e.what());
}

}  // namespace

// ---------------------------------------------------------------------------
// SuperModel / report

void SuperModel::validate() const {
  require_same_size(motion.size(), alpha.size(), "model alpha");
  require_same_size(motion.size(), beta.size(), "model beta");
  require_same_size(motion.size(), mu.size(), "model mu");
  if (alpha.min() < 0.0) throw DomainError("alpha must be nonnegative");
}

bool CouplingReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckRecord& c) { return c.passed; });
}

void CouplingReport::add_test(const TestResult& t, double threshold, std::uint64_t seed, std::size_t replicas,
                              std::string note) {
  add({t.name, t.statistic, t.p_value, threshold, "p>=" + fmt(threshold), t.p_value >= threshold, seed, replicas,
       std::move(note)});
}

void CouplingReport::add_band(const std::string& name, const Estimate& estimate, double reference, double k,
                              std::uint64_t seed, std::string note) {
  const auto band = band_check(name, estimate, reference, k);
  if (!note.empty()) note += "; ";
  note += "estimate=" + fmt(estimate.mean) + " se=" + fmt(estimate.se) + " reference=" + fmt(reference);
  add({name, band.statistic, band.p_value, k, "sigma<=" + fmt(k), band.passed, seed, estimate.n, std::move(note)});
}

void CouplingReport::add_value(const std::string& name, double value, double tolerance, std::uint64_t seed,
                               std::size_t replicas, std::string note) {
  add({name, value, kNaN, tolerance, "value<=" + fmt(tolerance), value <= tolerance, seed, replicas,
       std::move(note)});
}

void CouplingReport::add_flag(const std::string& name, std::size_t violations, std::uint64_t seed,
                              std::size_t replicas, std::string note) {
  add({name, double(violations), kNaN, 0.0, "flag", violations == 0, seed, replicas, std::move(note)});
}

void CouplingReport::add_info(const std::string& name, double value, std::uint64_t seed, std::size_t replicas,
                              std::string note) {
  add({name, value, kNaN, 0.0, "info", true, seed, replicas, std::move(note)});
}

void CouplingReport::merge(const CouplingReport& other, const std::string& prefix) {
  for (auto c : other.checks) {
    c.name = prefix + c.name;
    checks.push_back(std::move(c));
  }
}

std::string CouplingReport::to_text() const {
  std::ostringstream os;
  os << "# scenario: " << scenario << '\n';
  for (const auto& [k, v] : metadata) os << "# " << k << ": " << v << '\n';
  for (const auto& c : checks) {
    os << (c.passed ? "PASS" : "FAIL") << "  " << c.name << "  statistic=" << fmt(c.statistic)
       << " p=" << fmt(c.p_value) << " rule=" << c.rule << " seed=" << c.seed << " replicas=" << c.replicas;
    if (!c.note.empty()) os << "  (" << c.note << ")";
    os << '\n';
  }
  os << "# verdict: " << (passed() ? "PASS" : "FAIL") << '\n';
  return os.str();
}

std::string CouplingReport::to_json() const {
  nlohmann::ordered_json j;
  j["scenario"] = scenario;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  for (const auto& [k, v] : metadata) meta[k] = v;
  j["metadata"] = meta;
  j["passed"] = passed();
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    nlohmann::ordered_json r;
    r["name"] = c.name;
    r["statistic"] = std::isfinite(c.statistic) ? nlohmann::ordered_json(c.statistic)
                                                : nlohmann::ordered_json(fmt(c.statistic));
    r["p_value"] = std::isfinite(c.p_value) ? nlohmann::ordered_json(c.p_value) : nlohmann::ordered_json(nullptr);
    r["threshold"] = c.threshold;
    r["rule"] = c.rule;
    r["passed"] = c.passed;
    r["seed"] = c.seed;
    r["replicas"] = c.replicas;
    r["note"] = c.note;
    arr.push_back(std::move(r));
  }
  j["checks"] = std::move(arr);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Trimmed tree

TrimmedTree extract_trimmed_tree(const SuperTrajectory& traj, const std::vector<double>& t_grid, double R,
                                 double min_margin) {
  const auto grid = sorted_grid(t_grid);
  if (R < grid.back() + min_margin) {
    std::ostringstream os;
    os << "horizon margin not satisfied: R=" << R << " < max(t)=" << grid.back() << " + margin " << min_margin;
    throw PreconditionError(os.str());
  }
  TrimmedTree tree;
  tree.R = R;
  tree.times = grid;
  for (double t : grid) tree.sets.push_back(ancestors(traj, t, R));
  return tree;
}

bool trimmed_tree_nested(const SuperTrajectory& traj, const TrimmedTree& tree) {
  for (std::size_t k = 1; k < tree.times.size(); ++k) {
    std::unordered_set<ParticleId> earlier;
    for (const auto& a : tree.sets[k - 1].atoms()) earlier.insert(a.id);
    const double t_prev = tree.times[k - 1];
    if (traj.genealogy) {
      for (const auto& a : tree.sets[k].atoms()) {
        if (!earlier.count(traj.genealogy->ancestor_at(a.id, t_prev))) return false;
      }
      continue;
    }
    const int lk = traj.time_index(tree.times[k]);
    const int lp = traj.time_index(t_prev);
    if (lk < 0 || lp < 0) throw DomainError("trimmed_tree_nested: grid times not recorded in the trajectory");
    std::unordered_map<ParticleId, std::uint32_t> position;
    const auto& level = traj.levels[static_cast<std::size_t>(lk)];
    for (std::uint32_t i = 0; i < level.atoms.size(); ++i) position.emplace(level.atoms[i].id, i);
    for (const auto& a : tree.sets[k].atoms()) {
      auto it = position.find(a.id);
      if (it == position.end()) return false;
      std::uint32_t idx = it->second;
      for (int m = lk; m > lp; --m) idx = traj.levels[static_cast<std::size_t>(m)].parent[idx];
      if (!earlier.count(traj.levels[static_cast<std::size_t>(lp)].atoms[idx].id)) return false;
    }
  }
  return true;
}

double trimmed_margin(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Field& p,
                      const SolverOptions& solver) {
  return stabilization_time(motion, alpha, beta, p, 0.01, solver);
}

// ---------------------------------------------------------------------------
// Theorem-level verifiers

namespace {

struct EmbeddingSamples {
  CountTable a;
  CountTable b;
  // gf[f][k]: generating-functional samples of A and B.
  std::vector<std::vector<std::vector<double>>> gf_a, gf_b;
};

EmbeddingSamples sample_embedding(const SuperModel& model, const Field& h, const Field& gamma,
                                  const std::vector<double>& grid, const std::vector<Field>& gf_fields,
                                  const VerifyOptions& options) {
  const auto n = model.motion.size();
  const auto reps = options.replicas;
  EmbeddingSamples s{CountTable(grid.size(), n, reps), CountTable(grid.size(), n, reps), {}, {}};
  s.gf_a.assign(gf_fields.size(), std::vector<std::vector<double>>(grid.size(), std::vector<double>(reps)));
  s.gf_b = s.gf_a;

  auto cfg = super_config(options, grid.back(), grid);
  cfg.record_ancestry = false;
  const SuperSimulator sim(model.motion, model.alpha, model.beta, model.mu, cfg);
  const MotionCtmc qh = h_transform(model.motion, h);
  const Field b(Eigen::VectorXd(h.values().cwiseProduct(model.alpha.values())));
  const Measure h_mu = reweight(model.mu, h);

  auto gf_value = [](const std::vector<std::int64_t>& c, const Field& f) {
    double v = 1.0;
    for (std::size_t x = 0; x < c.size(); ++x) v *= std::pow(1.0 - f[x], double(c[x]));
    return v;
  };

  for_each_replica(reps, options.threads, [&](std::size_t i) {
    try {
      RngStream dyn(options.seed, i, Purpose::kDynamics);
      RngStream pois(options.seed, i, Purpose::kPoissonize);
      const auto traj = sim.run(dyn);
      IdSource ids;
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto idx = static_cast<std::size_t>(traj.time_index(grid[k]));
        const auto c = pois_sample(reweight(traj.masses[idx], h), pois, ids).counts();
        s.a.put(k, i, c);
        for (std::size_t f = 0; f < gf_fields.size(); ++f) s.gf_a[f][k][i] = gf_value(c, gf_fields[f]);
      }
      RngStream ref(options.seed, i, Purpose::kReference);
      IdSource ids_b;
      const auto nu0 = pois_sample(h_mu, ref, ids_b);
      const auto snaps = simulate_bbps_snapshots(qh, b, gamma, nu0, grid, ref, ids_b, options.limits);
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto c = measure_counts(snaps[k]);
        s.b.put(k, i, c);
        for (std::size_t f = 0; f < gf_fields.size(); ++f) s.gf_b[f][k][i] = gf_value(c, gf_fields[f]);
      }
    } catch (const CapExceeded& e) {
      rethrow_with_replica(i, e);
    }
  });
  return s;
}

}  // namespace

CouplingReport verify_embedding(const SuperModel& model, const Field& h, const std::vector<double>& t_grid,
                                const VerifyOptions& options) {
  model.validate();
  const auto grid = sorted_grid(t_grid);
  const Field gamma = gamma_from_h(model.motion, model.alpha, model.beta, h);
  const auto s = sample_embedding(model, h, gamma, grid, {}, options);
  CouplingReport report;
  report.scenario = "embedding";
  compare_tables(report, s.a, s.b, grid, random_subsets(model.motion.size(), 3, options.seed), options);
  return report;
}

CouplingReport verify_poissonization(const SuperModel& model, const std::vector<double>& t_grid,
                                     const VerifyOptions& options) {
  model.validate();
  const auto n = model.motion.size();
  for (std::size_t x = 0; x < n; ++x) {
    if (model.alpha[x] < model.beta[x]) {
      throw PreconditionError("Poissonization needs alpha >= beta; fails at state " + std::to_string(x));
    }
  }
  const auto grid = sorted_grid(t_grid);
  const Field h = ones(n);
  const Field death(Eigen::VectorXd(model.alpha.values() - model.beta.values()));

  std::vector<Field> fields{Field::constant(n, 0.5)};
  RngStream frng(options.seed, 0, Purpose::kInstances);
  for (int j = 0; j < 2; ++j) {
    Eigen::VectorXd f(static_cast<Eigen::Index>(n));
    for (auto& v : f) v = 0.1 + 0.8 * frng.uniform();
    fields.emplace_back(std::move(f));
  }

  const auto s = sample_embedding(model, h, death, grid, fields, options);
  CouplingReport report;
  report.scenario = "poissonization";
  compare_tables(report, s.a, s.b, grid, random_subsets(n, 3, options.seed), options);

  for (std::size_t fi = 0; fi < fields.size(); ++fi) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double t = grid[k];
      // Superprocess side through the log-Laplace equation, particle side
      // through the generating equation with b = alpha, d = alpha - beta.
      const double ref_ll =
          std::exp(-model.mu.integrate(
              solve_loglaplace(model.motion, model.alpha, model.beta, fields[fi], t, options.solver).value));
      const double ref_gen = std::exp(
          -model.mu.integrate(solve_generating(model.motion, model.alpha, death, fields[fi], t, options.solver).value));
      const auto tag = "f" + std::to_string(fi) + " " + time_tag(t);
      report.add_band("generating functional of Pois(X) " + tag, estimate_mean(s.gf_a[fi][k]), ref_ll, 4.0,
                      options.seed);
      report.add_band("generating functional of particle system " + tag, estimate_mean(s.gf_b[fi][k]), ref_gen, 4.0,
                      options.seed);
      report.add_value("log-Laplace vs generating reference " + tag, std::abs(ref_ll - ref_gen), 1e-8);
    }
  }
  return report;
}

CouplingReport verify_trimmed_identity(const SuperModel& model, const std::vector<double>& t_grid, double R,
                                       const VerifyOptions& options) {
  model.validate();
  const auto n = model.motion.size();
  const auto grid = sorted_grid(t_grid);
  const auto p = survival_p(model.motion, model.alpha, model.beta, options.solver).p;
  if (!p.all_positive()) throw PreconditionError("trimmed tree needs p > 0 everywhere");
  const double margin = trimmed_margin(model.motion, model.alpha, model.beta, p, options.solver);
  const double t_max = grid.back();
  if (R <= 0.0) R = t_max + 2.0 * margin;
  if (R < t_max + margin) {
    std::ostringstream os;
    os << "horizon margin not satisfied: R=" << R << " but max(t) + margin = " << t_max + margin;
    throw PreconditionError(os.str());
  }
  const double R2 = R + margin;
  const double T = std::max(t_max, 1e-9);

  auto cfg = super_config(options, T, grid);
  cfg.tail_horizons = {R, R2};
  const SuperSimulator sim(model.motion, model.alpha, model.beta, model.mu, cfg);
  // Logging consumes no randomness, so both simulators give the same path.
  cfg.record_genealogy = true;
  const SuperSimulator logged(model.motion, model.alpha, model.beta, model.mu, cfg);

  const auto reps = options.replicas;
  CountTable a(grid.size(), n, reps), b(grid.size(), n, reps);
  std::vector<char> nested(reps, 1), never_dies(reps, 1), stable(reps, 1);

  const MotionCtmc qp = h_transform(model.motion, p);
  const Field split(Eigen::VectorXd(p.values().cwiseProduct(model.alpha.values())));
  const Field zero = Field::constant(n, 0.0);
  const Measure p_mu = reweight(model.mu, p);

  for_each_replica(reps, options.threads, [&](std::size_t i) {
    try {
      RngStream dyn(options.seed, i, Purpose::kDynamics);
      const auto traj = (i < options.genealogy_replicas ? logged : sim).run(dyn);
      const auto tree = extract_trimmed_tree(traj, grid, R, margin);
      for (std::size_t k = 0; k < grid.size(); ++k) a.put(k, i, tree.sets[k].counts());
      nested[i] = trimmed_tree_nested(traj, tree);
      const bool survives = !tree.sets.back().empty() ||
                            std::any_of(traj.tail_marks[0].begin(), traj.tail_marks[0].end(), [](bool m) { return m; });
      if (survives) {
        for (const auto& s : tree.sets) never_dies[i] = never_dies[i] && !s.empty();
      }
      for (double t : grid) {
        if (!(ancestors(traj, t, R).sorted() == ancestors(traj, t, R2).sorted())) stable[i] = 0;
      }

      RngStream ref(options.seed, i, Purpose::kReference);
      IdSource ids;
      const auto nu0 = pois_sample(p_mu, ref, ids);
      const auto snaps = simulate_bbps_snapshots(qp, split, zero, nu0, grid, ref, ids, options.limits);
      for (std::size_t k = 0; k < grid.size(); ++k) b.put(k, i, snaps[k].counts());
    } catch (const CapExceeded& e) {
      rethrow_with_replica(i, e);
    }
  });

  CouplingReport report;
  report.scenario = "trimmed-tree";
  report.add_info("horizon R", R, options.seed, reps, "margin=" + fmt(margin));
  compare_tables(report, a, b, grid, {}, options);

  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double t = grid[k];
    // Mean size of the (Q^p, p alpha, 0) system from Pois(p mu): <p mu, exp(t(Q^p + diag(p alpha))) 1>.
    const double reference = p_mu.integrate(linear_moment(qp, split, ones(n), t));
    report.add_band("trimmed lineage mean " + time_tag(t), estimate_mean(to_doubles(a.totals[k])), reference, 6.0,
                    options.seed);
    report.add_band("direct system mean " + time_tag(t), estimate_mean(to_doubles(b.totals[k])), reference, 6.0,
                    options.seed);
  }
  const auto count_false = [](const std::vector<char>& v) {
    return static_cast<std::size_t>(std::count(v.begin(), v.end(), 0));
  };
  report.add_flag("nested supports across grid times", count_false(nested), options.seed, reps,
                  "event-log replay on the first " + std::to_string(std::min(reps, options.genealogy_replicas)) +
                      " replicas");
  report.add_flag("trimmed tree never dies before R", count_false(never_dies), options.seed, reps);
  const double unstable = double(count_false(stable)) / double(reps);
  report.add_value("fraction with ancestors(t,R) != ancestors(t,R')", unstable, 0.01, options.seed, reps,
                   "R'=" + fmt(R2));
  return report;
}

CouplingReport verify_ancestor_poisson(const SuperModel& model, double t, const VerifyOptions& options) {
  model.validate();
  if (!(t > 0.0)) throw DomainError("verify_ancestor_poisson requires t > 0");
  const auto n = model.motion.size();
  const auto u = u_infinity(model.motion, model.alpha, model.beta, t, options.solver);
  if (u.any_infinite()) throw PreconditionError("U_t(infinity) is infinite at some state");
  const auto reps = options.replicas;

  auto run = [&](std::uint32_t N, Purpose purpose) {
    VerifyOptions o = options;
    o.N = N;
    auto cfg = super_config(o, t, {});
    const SuperSimulator sim(model.motion, model.alpha, model.beta, model.mu, cfg);
    std::vector<std::vector<std::int64_t>> counts(n, std::vector<std::int64_t>(reps));
    for_each_replica(reps, options.threads, [&](std::size_t i) {
      try {
        RngStream rng(options.seed, i, purpose);
        const auto c = ancestors(sim.run(rng), 0.0, t).counts();
        for (std::size_t x = 0; x < n; ++x) counts[x][i] = c[x];
      } catch (const CapExceeded& e) {
        rethrow_with_replica(i, e);
      }
    });
    return counts;
  };
  const auto base = run(options.N, Purpose::kDynamics);
  const auto doubled = run(2 * options.N, Purpose::kSynthetic);

  CouplingReport report;
  report.scenario = "ancestor-poisson";
  const std::size_t tests = n + n * (n - 1) / 2;
  const double adjusted = options.level / double(tests);
  for (std::size_t x = 0; x < n; ++x) {
    auto r = poisson_gof(base[x], model.mu[x] * u.value[x], adjusted);
    r.name = "state " + std::to_string(x) + " ancestor count Poisson(" + fmt(model.mu[x] * u.value[x]) + ")";
    report.add_test(r, adjusted, options.seed, reps);
  }
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = x + 1; y < n; ++y) {
      report.add_test(independence_test("independence of states " + std::to_string(x) + "," + std::to_string(y),
                                        to_doubles(base[x]), to_doubles(base[y]), adjusted),
                      adjusted, options.seed, reps);
    }
  }
  auto totals = [&](const std::vector<std::vector<std::int64_t>>& c) {
    std::vector<double> v(reps, 0.0);
    for (std::size_t x = 0; x < n; ++x) {
      for (std::size_t i = 0; i < reps; ++i) v[i] += double(c[x][i]);
    }
    return estimate_mean(v);
  };
  const auto m1 = totals(base);
  const auto m2 = totals(doubled);
  const double reference = model.mu.integrate(u.value);
  report.add_band("mean ancestor count, N=" + std::to_string(options.N), m1, reference, 4.0, options.seed);
  const Estimate diff{m1.mean - m2.mean, std::hypot(m1.se, m2.se), reps};
  report.add_band("N vs 2N mean ancestor count", diff, 0.0, 4.0, options.seed,
                  "N=" + std::to_string(options.N) + " 2N mean=" + fmt(m2.mean));
  return report;
}

CouplingReport verify_domination(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Field& h,
                                 const SolverOptions& solver, double tolerance) {
  const Field gamma = gamma_from_h(motion, alpha, beta, h);
  const auto s = survival_p(motion, alpha, beta, solver);
  CouplingReport report;
  report.scenario = "domination";
  report.add_value("survival_p residual", s.residual, solver.newton_tol);
  for (std::size_t x = 0; x < motion.size(); ++x) {
    report.add_value("p - h at state " + std::to_string(x), s.p[x] - h[x], tolerance, 0, 0,
                     "p=" + fmt(s.p[x]) + " h=" + fmt(h[x]) + " gamma=" + fmt(gamma[x]));
  }
  return report;
}

CouplingReport verify_moments(const SuperModel& model, const Field& f, const Field& g, double t,
                              const VerifyOptions& options) {
  model.validate();
  require_same_size(model.motion.size(), f.size(), "verify_moments f");
  require_same_size(model.motion.size(), g.size(), "verify_moments g");
  const auto reps = options.replicas;
  auto cfg = super_config(options, t, {});
  cfg.record_ancestry = false;
  const SuperSimulator sim(model.motion, model.alpha, model.beta, model.mu, cfg);
  std::vector<double> xf(reps), xg(reps);
  for_each_replica(reps, options.threads, [&](std::size_t i) {
    try {
      RngStream rng(options.seed, i, Purpose::kDynamics);
      const auto traj = sim.run(rng);
      const auto& X = traj.masses.back();
      xf[i] = X.integrate(f);
      xg[i] = X.integrate(g);
    } catch (const CapExceeded& e) {
      rethrow_with_replica(i, e);
    }
  });
  CouplingReport report;
  report.scenario = "moments";
  const double mean_f = model.mu.integrate(linear_moment(model.motion, model.beta, f, t));
  const double mean_g = model.mu.integrate(linear_moment(model.motion, model.beta, g, t));
  const double cov = covariance_ref(model.motion, model.alpha, model.beta, model.mu, f, g, t);
  report.add_band("mean <X_t,f> " + time_tag(t), estimate_mean(xf), mean_f, 4.0, options.seed);
  report.add_band("mean <X_t,g> " + time_tag(t), estimate_mean(xg), mean_g, 4.0, options.seed);
  report.add_band("cov(<X_t,f>,<X_t,g>) " + time_tag(t), covariance_estimate(xf, xg), cov, 6.0, options.seed);
  return report;
}

CouplingReport verify_dichotomy(const SuperModel& model, const std::vector<double>& horizons,
                                const VerifyOptions& options, double small_mass, double max_fraction) {
  model.validate();
  const auto grid = sorted_grid(horizons);
  const auto reps = options.replicas;

  auto cfg = super_config(options, grid.back(), grid);
  cfg.record_ancestry = false;
  double escape = 0.0;
  if (model.alpha.all_positive()) {
    const auto p = survival_p(model.motion, model.alpha, model.beta, options.solver).p;
    if (p.min() > 0.0) escape = std::max(small_mass, (10.0 + small_mass * p.max()) / p.min());
  }
  cfg.escape_mass = escape;
  const SuperSimulator sim(model.motion, model.alpha, model.beta, model.mu, cfg);

  std::vector<std::vector<char>> small(grid.size(), std::vector<char>(reps, 0));
  for_each_replica(reps, options.threads, [&](std::size_t i) {
    try {
      RngStream rng(options.seed, i, Purpose::kDynamics);
      const auto traj = sim.run(rng);
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const int idx = traj.time_index(grid[k]);
        if (idx < 0 || !traj.observed(static_cast<std::size_t>(idx))) continue;  // escaped earlier: large
        const double m = traj.masses[static_cast<std::size_t>(idx)].total();
        small[k][i] = m > 0.0 && m <= small_mass;
      }
    } catch (const CapExceeded& e) {
      rethrow_with_replica(i, e);
    }
  });

  CouplingReport report;
  report.scenario = "dichotomy";
  report.add_info("escape mass", escape, options.seed, reps);
  std::vector<double> fractions;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double frac = double(std::count(small[k].begin(), small[k].end(), 1)) / double(reps);
    fractions.push_back(frac);
    report.add_info("fraction with mass in (0," + fmt(small_mass) + "] at T=" + fmt(grid[k]), frac, options.seed,
                    reps);
  }
  std::size_t increases = 0;
  for (std::size_t k = 1; k < fractions.size(); ++k) increases += fractions[k] > fractions[k - 1];
  report.add_flag("fraction nonincreasing in T", increases, options.seed, reps);
  report.add(CheckRecord{"fraction at T=" + fmt(grid.back()) + " below " + fmt(max_fraction), fractions.back(), kNaN,
                         max_fraction, "value<" + fmt(max_fraction), fractions.back() < max_fraction, options.seed,
                         reps, ""});
  return report;
}

CouplingReport verify_girsanov(const MotionCtmc& motion, const Field& h, const Field& f, double T, std::size_t paths,
                               std::uint64_t seed) {
  require_same_size(motion.size(), f.size(), "verify_girsanov");
  const auto n = motion.size();
  const MotionCtmc qh = h_transform(motion, h);
  CouplingReport report;
  report.scenario = "girsanov";

  report.add_value("max |row sum of Q^h|", qh.rates().rowwise().sum().cwiseAbs().maxCoeff(), 1e-14);
  RngStream frng(seed, 0, Purpose::kInstances);
  double worst = 0.0;
  for (int j = 0; j < 20; ++j) {
    Eigen::VectorXd g(static_cast<Eigen::Index>(n));
    for (auto& v : g) v = 2.0 * frng.uniform() - 1.0;
    const Eigen::VectorXd& hv = h.values();
    const Eigen::VectorXd lhs = qh.rates() * g;
    const Eigen::VectorXd rhs =
        (motion.rates() * hv.cwiseProduct(g) - (motion.rates() * hv).cwiseProduct(g)).cwiseQuotient(hv);
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  report.add_value("max |Q^h f - (Q(hf) - (Qh) f)/h| over 20 f", worst, 1e-12);

  for (std::size_t x = 0; x < n; ++x) {
    std::vector<double> weighted(paths), direct(paths);
    RngStream a(seed, x, Purpose::kPath);
    RngStream b(seed, x, Purpose::kReference);
    for (std::size_t i = 0; i < paths; ++i) {
      const auto path = sample_ctmc_path(motion, static_cast<StateIndex>(x), T, a);
      weighted[i] = girsanov_weight(motion, h, path) * f[path.end_state()];
      direct[i] = f[sample_ctmc_path(qh, static_cast<StateIndex>(x), T, b).end_state()];
    }
    const auto ew = estimate_mean(weighted);
    const auto ed = estimate_mean(direct);
    const Estimate diff{ew.mean - ed.mean, std::hypot(ew.se, ed.se), paths};
    report.add_band("E[w f(xi_T)] - E[f(xi^h_T)] from state " + std::to_string(x), diff, 0.0, 4.0, seed,
                    "weighted=" + fmt(ew.mean) + " direct=" + fmt(ed.mean));
  }
  return report;
}

}  // namespace supertrim
