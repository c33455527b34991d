#pragma once

// Shared event loop for the particle simulators. Not installed.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "supertrim/model.hpp"
#include "supertrim/particles.hpp"

namespace supertrim::detail {

struct Particle {
  ParticleId id = 0;
  ParticleId parent = 0;
  /// Free payload carried to both children on a split (ancestry bookkeeping).
  std::uint32_t label = 0;
};

enum class AdvanceStatus { kReached, kStopped };

/// Gillespie direct method over per-state buckets. Every particle at x carries
/// a jump clock (rate -Q_xx), a split clock (split[x]) and a death clock
/// (death[x]); the superposition is sampled as one exponential clock and the
/// firing particle and kind are drawn in proportion to their rates. This has
/// the law of independent per-particle clocks.
class BranchingEngine {
 public:
  BranchingEngine(const MotionCtmc& motion, Eigen::VectorXd split, Eigen::VectorXd death, RngStream& rng,
                  IdSource& ids, const BranchingOptions& options);

  void add(StateIndex state, ParticleId id, ParticleId parent = 0, std::uint32_t label = 0);
  /// Events are appended here when set.
  void set_log(std::vector<GenealogyEvent>* log) { log_ = log; }
  /// Stop early (status kStopped) once the population reaches this size; 0 disables.
  void set_stop_population(std::size_t n) { stop_population_ = n; }

  /// Runs all events in (time(), t]. The pending clock is discarded at t,
  /// which is exact by memorylessness.
  AdvanceStatus advance_to(double t);

  double time() const { return time_; }
  std::size_t population() const { return population_; }
  std::uint64_t events() const { return events_; }
  std::vector<std::vector<Particle>>& buckets() { return buckets_; }
  const std::vector<std::vector<Particle>>& buckets() const { return buckets_; }
  PointMeasure snapshot() const;

 private:
  [[noreturn]] void population_cap() const;
  [[noreturn]] void event_cap() const;

  std::size_t n_;
  /// Off-diagonal rates, row-major, diagonal zeroed.
  std::vector<double> jump_;
  std::vector<double> exit_;
  std::vector<double> split_;
  std::vector<double> per_particle_;
  RngStream& rng_;
  IdSource& ids_;
  BranchingOptions options_;
  std::vector<std::vector<Particle>> buckets_;
  std::vector<GenealogyEvent>* log_ = nullptr;
  std::size_t stop_population_ = 0;
  std::size_t population_ = 0;
  std::uint64_t events_ = 0;
  double time_ = 0.0;
};

}  // namespace supertrim::detail
