#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "supertrim/model.hpp"

namespace supertrim {

struct SolverOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double max_step = 1e300;
  std::size_t max_steps = 2'000'000;
  double newton_tol = 1e-10;
  int newton_max_iter = 80;
  /// Initial cap C standing in for f = infinity.
  double cap = 1e6;
  /// Number of cap doublings before a component is declared non-saturating.
  int max_doublings = 24;
  /// Relative change accepted as saturation of U_t(C) in C.
  double saturation_rtol = 1e-8;
  /// When false, u_infinity throws SolverError instead of flagging components infinite.
  bool allow_infinite = true;
  /// Tolerance of the U_t p = p check inside survival_p.
  double fixed_point_tol = 1e-8;
};

struct SolverDiagnostics {
  std::size_t steps = 0;
  std::size_t rejected = 0;
  double residual = 0.0;
  int iterations = 0;
};

struct SemigroupResult {
  Field value;
  /// Per-state flag; set where the component is +infinity (value holds 0 there).
  std::vector<bool> infinite;
  SolverDiagnostics diagnostics;

  bool any_infinite() const;
};

/// u' = Qu + beta u - alpha u^2, u_0 = f. Result is >= 0.
SemigroupResult solve_loglaplace(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Field& f,
                                 double t, const SolverOptions& options = {});

/// u' = Qu + b u (1 - u) - d u, u_0 = f in [0, 1]. Result is checked to stay in [0, 1].
SemigroupResult solve_generating(const MotionCtmc& motion, const Field& b, const Field& d, const Field& f, double t,
                                 const SolverOptions& options = {});

/// U_t(infinity) by cap-and-double with extrapolation in 1/u. Components whose
/// value keeps growing with the cap are flagged infinite.
SemigroupResult u_infinity(const MotionCtmc& motion, const Field& alpha, const Field& beta, double t,
                           const SolverOptions& options = {});

struct SurvivalResult {
  Field p;
  /// ||Qp + beta p - alpha p^2||_inf
  double residual = 0.0;
  /// max over t in {0.5, 1, 2} of ||U_t p - p||_inf
  double fixed_point_error = 0.0;
  /// Long-horizon U_T(infinity) used as the warm start, and the horizon T.
  Field warm_start;
  double warm_horizon = 0.0;
  int newton_iterations = 0;
};

/// Infinitesimal survival probability: positive fixed point of
/// Qp + beta p - alpha p^2 = 0 reached from U_T(infinity). Requires alpha > 0.
SurvivalResult survival_p(const MotionCtmc& motion, const Field& alpha, const Field& beta,
                          const SolverOptions& options = {});

/// V_t f = exp(t (Q + diag beta)) f.
Field linear_moment(const MotionCtmc& motion, const Field& beta, const Field& f, double t);

/// 2 int_0^t <mu, V_s(alpha (V_{t-s} f)(V_{t-s} g))> ds by adaptive Gauss-Kronrod.
double covariance_ref(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Measure& mu,
                      const Field& f, const Field& g, double t, double tolerance = 1e-8);

/// ||U^h_t f - U_t(h f)/h||_inf where U^h is the log-Laplace semigroup of
/// (Q^h, h alpha, beta + Qh/h).
double verify_weighted_identity(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Field& h,
                                const Field& f, double t, const SolverOptions& options = {});

/// gamma = -(Qh + beta h - alpha h^2)/h, clamped at 0 from below within tol.
/// Throws PreconditionError if some component is below -tol.
Field gamma_from_h(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Field& h,
                   double tolerance = 1e-8);

struct FlowValue {
  double value = 0.0;
  bool infinite = false;
};

using ScalarFunction = std::function<double(double)>;

/// U_t(infinity)(x) for a superprocess whose motion is a deterministic flow.
/// Along the trajectory xi_s started at x, w = 1/u solves the linear equation
/// w' = beta(xi) w - alpha(xi) with w(t) = 0; the result is 1/w(0), flagged
/// infinite when w(0) vanishes.
FlowValue flow_u_infinity(const MotionFlow1D& motion, const ScalarFunction& alpha, const ScalarFunction& beta,
                          double x, double t, const SolverOptions& options = {});

/// Smallest tau (searched on a doubling-then-bisection grid) with
/// ||U_tau(infinity) - p||_inf < fraction * min p.
double stabilization_time(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Field& p,
                          double fraction = 0.01, const SolverOptions& options = {});

}  // namespace supertrim
