#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "supertrim/model.hpp"
#include "supertrim/particles.hpp"

namespace supertrim {

struct SuperConfig {
  /// Particles per unit mass; every particle carries mass 1/N.
  std::uint32_t N = 500;
  double T = 1.0;
  /// Observation times in [0, T]; 0 and T are always observed.
  std::vector<double> time_grid;
  BranchingOptions limits;
  /// Keep the full event log (needed for ancestry at off-grid times and export).
  bool record_genealogy = false;
  /// Keep per-grid-time particle lists with links to the previous grid time.
  bool record_ancestry = true;
  /// Horizons R > T. Each particle alive at T is marked with an exact joint
  /// draw of "has descendants at R" for every listed R, so ancestors(t, R) is
  /// available without simulating past T.
  std::vector<double> tail_horizons;
  /// Stop a replica once its total mass reaches this value; 0 disables.
  double escape_mass = 0.0;
};

/// Particles alive at one observation time. parent[i] indexes the previous
/// level's atom that is the ancestor of atoms[i].
struct AncestryLevel {
  double time = 0.0;
  std::vector<Atom> atoms;
  std::vector<std::uint32_t> parent;
};

class SuperTrajectory {
 public:
  std::size_t num_states = 0;
  std::uint32_t N = 0;
  double horizon = 0.0;
  /// All observation times requested (sorted, unique, 0 and T included).
  std::vector<double> times;
  /// X at times[k] for k < masses.size(); shorter than `times` after an escape.
  std::vector<Measure> masses;
  std::vector<AncestryLevel> levels;
  std::optional<Genealogy> genealogy;
  /// Sorted tail horizons; tail_marks[j][i] tells whether levels.back().atoms[i]
  /// has descendants at tail_horizons[j]. Marks are nested: later horizons
  /// imply earlier ones.
  std::vector<double> tail_horizons;
  std::vector<std::vector<bool>> tail_marks;
  bool escaped = false;
  double escape_time = 0.0;

  /// Index of t in `times` (exact match up to 1e-12 relative), or -1.
  int time_index(double t) const;
  bool observed(std::size_t k) const { return k < masses.size(); }
  /// X_t at an observation time, or from the genealogy elsewhere.
  Measure mass_at(double t) const;
  double total_mass_at(std::size_t k) const { return masses.at(k).total(); }
};

/// Mass-1/N branching particle approximation. Reusable across replicas: the
/// exact tail survival probabilities are solved once at construction.
class SuperSimulator {
 public:
  SuperSimulator(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Measure& mu,
                 SuperConfig config);

  SuperTrajectory run(RngStream& rng) const;

  const SuperConfig& config() const { return config_; }
  const Field& split_rate() const { return split_; }
  const Field& death_rate() const { return death_; }
  /// P[a particle at x at time T has descendants at tail_horizons[j]].
  const std::vector<Field>& tail_survival() const { return tail_survival_; }

 private:
  MotionCtmc motion_;
  Measure mu_;
  SuperConfig config_;
  Field split_;
  Field death_;
  std::vector<Field> tail_survival_;
  std::vector<double> times_;
};

/// Initial particles Poisson(N mu(x)) per state; split rate N alpha + beta^+,
/// death rate N alpha + beta^-, motion by Q.
SuperTrajectory simulate_super(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Measure& mu,
                               const SuperConfig& config, RngStream& rng);

struct MeasurePath {
  std::vector<double> times;
  std::vector<Measure> values;
};

/// Euler-Maruyama with full truncation for
/// dX = (Q^T X + beta X) dt + sqrt(2 alpha X^+) dW, recorded at `record_times`
/// (default {T}). Steps are shortened to land on record times.
MeasurePath simulate_super_sde(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Measure& mu,
                               double dt, double T, RngStream& rng, std::vector<double> record_times = {});

/// (hX)(x) = h(x) X(x).
Measure reweight(const Measure& X, const Field& h);

/// Distinct time-t ancestors of the population alive at time r, each counted
/// once, located at their time-t states and sorted by id.
PointMeasure ancestors(const SuperTrajectory& traj, double t, double r);

}  // namespace supertrim
