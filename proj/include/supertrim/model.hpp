#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "supertrim/rng.hpp"

namespace supertrim {

using StateIndex = std::uint32_t;
using ParticleId = std::uint64_t;

/// Finite labeled state set.
class StateSpace {
 public:
  explicit StateSpace(std::vector<std::string> labels);
  /// States named "0", "1", ..., "n-1".
  static StateSpace indexed(std::size_t n);

  std::size_t size() const { return labels_.size(); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::string>& labels() const { return labels_; }
  StateIndex index_of(const std::string& label) const;

 private:
  std::vector<std::string> labels_;
};

/// Real-valued function on the state space (f, h, alpha, beta, p, u_t).
class Field {
 public:
  Field() = default;
  explicit Field(Eigen::VectorXd values);
  explicit Field(std::vector<double> values);
  Field(std::initializer_list<double> values);

  static Field constant(std::size_t n, double c);

  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }
  const Eigen::VectorXd& values() const { return values_; }
  std::vector<double> to_vector() const;

  double min() const;
  double max() const;
  bool all_positive() const { return size() > 0 && min() > 0.0; }
  bool within(double lo, double hi) const { return size() == 0 || (min() >= lo && max() <= hi); }

 private:
  Eigen::VectorXd values_;
};

/// Finite nonnegative measure on the state space.
class Measure {
 public:
  Measure() = default;
  explicit Measure(Eigen::VectorXd masses);
  explicit Measure(std::vector<double> masses);
  Measure(std::initializer_list<double> masses);

  static Measure zero(std::size_t n) { return Measure(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))); }
  static Measure dirac(std::size_t n, std::size_t x, double mass);

  std::size_t size() const { return static_cast<std::size_t>(masses_.size()); }
  double operator[](std::size_t i) const { return masses_[static_cast<Eigen::Index>(i)]; }
  const Eigen::VectorXd& masses() const { return masses_; }
  double total() const { return masses_.sum(); }
  /// <mu, f>
  double integrate(const Field& f) const;

 private:
  Eigen::VectorXd masses_;
};

/// One located, identified particle.
struct Atom {
  StateIndex state = 0;
  ParticleId id = 0;
  friend bool operator==(const Atom&, const Atom&) = default;
};

/// Finite point measure whose atoms carry pairwise distinct ids.
class PointMeasure {
 public:
  PointMeasure() = default;
  explicit PointMeasure(std::size_t num_states) : num_states_(num_states) {}
  PointMeasure(std::size_t num_states, std::vector<Atom> atoms);

  std::size_t num_states() const { return num_states_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }
  const std::vector<Atom>& atoms() const { return atoms_; }

  std::vector<std::int64_t> counts() const;
  std::int64_t count_in(std::span<const StateIndex> subset) const;
  bool contains(ParticleId id) const;
  /// Atoms sorted by id, for set comparisons.
  std::vector<Atom> sorted() const;

 private:
  std::size_t num_states_ = 0;
  std::vector<Atom> atoms_;
};

/// Per-run source of fresh particle ids (64-bit counter).
class IdSource {
 public:
  explicit IdSource(ParticleId first = 1) : next_(first) {}
  ParticleId take() { return next_++; }
  ParticleId peek() const { return next_; }

 private:
  ParticleId next_;
};

/// Conservative rate matrix of a finite continuous-time Markov chain.
class MotionCtmc {
 public:
  /// Throws DomainError naming the first row that is not a valid generator row.
  explicit MotionCtmc(Eigen::MatrixXd rates, double row_sum_tolerance = 1e-10);
  /// Row-major construction, as read from configuration files.
  static MotionCtmc from_rows(std::size_t n, std::span<const double> row_major, double row_sum_tolerance = 1e-10);

  std::size_t size() const { return static_cast<std::size_t>(rates_.rows()); }
  const Eigen::MatrixXd& rates() const { return rates_; }
  double rate(std::size_t x, std::size_t y) const {
    return rates_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
  }
  double exit_rate(std::size_t x) const { return -rate(x, x); }

 private:
  Eigen::MatrixXd rates_;
};

/// Deterministic flow dx/dt = v(x) on a closed interval.
class MotionFlow1D {
 public:
  MotionFlow1D(std::function<double(double)> velocity, double lower = -1.0, double upper = 1.0,
               double tolerance = 1e-10);

  double velocity(double x) const { return velocity_(x); }
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  double tolerance() const { return tolerance_; }

 private:
  std::function<double(double)> velocity_;
  double lower_;
  double upper_;
  double tolerance_;
};

/// Piecewise-constant right-continuous path on [0, horizon].
struct JumpPath {
  struct Jump {
    double time;
    StateIndex state;
  };

  StateIndex start = 0;
  std::vector<Jump> jumps;
  double horizon = 0.0;

  StateIndex state_at(double t) const;
  StateIndex end_state() const { return jumps.empty() ? start : jumps.back().state; }
  /// Throws DomainError unless jump times are strictly increasing in (0, horizon]
  /// and every state is below num_states.
  void validate(std::size_t num_states) const;
};

/// (Qf)(x) = sum_y Q_xy f(y).
Field apply_generator(const MotionCtmc& motion, const Field& f);

/// Compensated h-transform: Q^h_xy = Q_xy h(y)/h(x) off the diagonal, rows
/// re-balanced to sum to zero.
MotionCtmc h_transform(const MotionCtmc& motion, const Field& h);

/// Likelihood ratio of the h-transformed chain against the original along
/// `path`: h(w_T)/h(w_0) exp(-int_0^T (Qh/h)(w_s) ds), integrated exactly.
double girsanov_weight(const MotionCtmc& motion, const Field& h, const JumpPath& path);

/// Independent Poisson(mu(x)) particles at each state, with fresh ids.
PointMeasure pois_sample(const Measure& mu, RngStream& rng, IdSource& ids);

/// Keeps each particle at x independently with probability f(x).
PointMeasure thin(const PointMeasure& nu, const Field& f, RngStream& rng);

/// Exponential-clock simulation of the chain started in x up to time T.
JumpPath sample_ctmc_path(const MotionCtmc& motion, StateIndex x, double horizon, RngStream& rng);

/// Throws DomainError if sizes disagree.
void require_same_size(std::size_t expected, std::size_t actual, const char* what);

}  // namespace supertrim
