#pragma once

#include <cstddef>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace supertrim::ode {

struct Options {
  double rtol = 1e-10;
  double atol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 2'000'000;
};

struct Stats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t evaluations = 0;
};

using Rhs = std::function<void(const Eigen::VectorXd& y, Eigen::VectorXd& dydt)>;
/// Applied to every accepted state (e.g. clipping round-off below zero).
using Projection = std::function<void(Eigen::VectorXd& y)>;

/// Dormand-Prince 5(4) with PI-free standard step control. Integrates the
/// autonomous system y' = rhs(y) from t0 to t1 in place. Throws SolverError
/// when the step budget is exhausted or the step size underflows.
Stats integrate(const Rhs& rhs, Eigen::VectorXd& y, double t0, double t1, const Options& options,
                const Projection& project = {});

}  // namespace supertrim::ode
