#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "supertrim/model.hpp"
#include "supertrim/particles.hpp"
#include "supertrim/semigroup.hpp"
#include "supertrim/stats.hpp"
#include "supertrim/superproc.hpp"

namespace supertrim {

/// (Q, alpha, beta) superprocess started from mu.
struct SuperModel {
  MotionCtmc motion;
  Field alpha;
  Field beta;
  Measure mu;

  void validate() const;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  std::size_t replicas = 1000;
  std::uint32_t N = 500;
  /// Family-wise level of the distributional checks of one verifier.
  double level = 0.01;
  unsigned threads = 1;
  /// Trimmed-tree checks: replicas (from index 0) that also record the full
  /// event log, so nestedness is replayed from the genealogy there.
  std::size_t genealogy_replicas = 25;
  SolverOptions solver;
  BranchingOptions limits;
};

/// One verdict. `rule` states how `passed` was decided:
///   "p>=x"      p_value >= threshold (threshold is the Bonferroni-adjusted level)
///   "sigma<=x"  statistic (distance in standard errors) <= threshold
///   "value<=x"  statistic <= threshold
///   "flag"      a counted property; statistic is the number of violations
///   "info"      recorded for reference, always passes
struct CheckRecord {
  std::string name;
  double statistic = 0.0;
  /// NaN when the check is not a hypothesis test.
  double p_value = 0.0;
  double threshold = 0.0;
  std::string rule;
  bool passed = true;
  std::uint64_t seed = 0;
  std::size_t replicas = 0;
  std::string note;
};

class CouplingReport {
 public:
  std::string scenario;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<CheckRecord> checks;

  bool passed() const;
  void add(CheckRecord record) { checks.push_back(std::move(record)); }
  /// Hypothesis test; passes iff p >= threshold.
  void add_test(const TestResult& t, double threshold, std::uint64_t seed, std::size_t replicas,
                std::string note = {});
  /// |estimate - reference| <= k standard errors.
  void add_band(const std::string& name, const Estimate& estimate, double reference, double k, std::uint64_t seed,
                std::string note = {});
  void add_value(const std::string& name, double value, double tolerance, std::uint64_t seed = 0,
                 std::size_t replicas = 0, std::string note = {});
  void add_flag(const std::string& name, std::size_t violations, std::uint64_t seed, std::size_t replicas,
                std::string note = {});
  void add_info(const std::string& name, double value, std::uint64_t seed = 0, std::size_t replicas = 0,
                std::string note = {});
  /// Appends all checks of `other`, prefixing their names.
  void merge(const CouplingReport& other, const std::string& prefix);

  /// One line per check; stable formatting, no timings.
  std::string to_text() const;
  std::string to_json() const;
};

/// Surviving lineages: for each t in `times`, the time-t ancestors of the
/// population alive at R.
struct TrimmedTree {
  double R = 0.0;
  std::vector<double> times;
  std::vector<PointMeasure> sets;
};

/// Requires R >= max(t_grid) + min_margin and R to be a grid time or tail
/// horizon of the trajectory. Throws PreconditionError on a margin failure.
TrimmedTree extract_trimmed_tree(const SuperTrajectory& traj, const std::vector<double>& t_grid, double R,
                                 double min_margin = 0.0);

/// Independent replay of the nestedness property: every member of the set at
/// times[k] descends from a member of the set at times[k-1]. Uses the event
/// log when recorded, otherwise the per-grid ancestry links.
bool trimmed_tree_nested(const SuperTrajectory& traj, const TrimmedTree& tree);

/// Smallest horizon margin tau with ||U_tau(inf) - p|| < 0.01 min p, so that
/// R = max(t_grid) + tau satisfies the finite-horizon surrogate criterion.
double trimmed_margin(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Field& p,
                      const SolverOptions& solver = {});

/// Superprocess sample Pois(h X_t) against the (Q^h, h alpha, gamma) particle
/// system from Pois(h mu), per grid time: total counts, per-state counts and
/// void probabilities of three random state subsets.
CouplingReport verify_embedding(const SuperModel& model, const Field& h, const std::vector<double>& t_grid,
                                const VerifyOptions& options);

/// The h = 1 embedding (requires alpha >= beta) plus generating-functional
/// agreement of both samples with exp(-<mu, U_t f>) for three test functions.
CouplingReport verify_poissonization(const SuperModel& model, const std::vector<double>& t_grid,
                                     const VerifyOptions& options);

/// Trimmed trees extracted at horizon R (0 = automatic) against the
/// (Q^p, p alpha, 0) system from Pois(p mu); also nestedness, non-extinction
/// of the trimmed tree and stabilization of ancestor sets in r.
CouplingReport verify_trimmed_identity(const SuperModel& model, const std::vector<double>& t_grid, double R,
                                       const VerifyOptions& options);

/// Ancestors at time 0 of the time-t population against independent
/// Poisson(mu(x) U_t inf(x)) counts; N against 2N bias check.
CouplingReport verify_ancestor_poisson(const SuperModel& model, double t, const VerifyOptions& options);

/// p <= h + tol for an admissible h.
CouplingReport verify_domination(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Field& h,
                                 const SolverOptions& solver = {}, double tolerance = 1e-8);

/// Mean of <X_t, f>, <X_t, g> against <mu, V_t .> (4 SE) and their covariance
/// against the quadrature reference (6 SE).
CouplingReport verify_moments(const SuperModel& model, const Field& f, const Field& g, double t,
                              const VerifyOptions& options);

/// Fraction of replicas with total mass in (0, small_mass] at each T in
/// `horizons`: must be nonincreasing and below max_fraction at the last T.
CouplingReport verify_dichotomy(const SuperModel& model, const std::vector<double>& horizons,
                                const VerifyOptions& options, double small_mass = 5.0, double max_fraction = 0.02);

/// Q^h algebra (rows, generator identity on random f) and the path-weight
/// identity E_x[w f(xi_T)] = E_x[f(xi^h_T)] for every start state.
CouplingReport verify_girsanov(const MotionCtmc& motion, const Field& h, const Field& f, double T,
                               std::size_t paths, std::uint64_t seed);

}  // namespace supertrim
