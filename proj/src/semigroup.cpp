#include "supertrim/semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "supertrim/error.hpp"
#include "supertrim/ode.hpp"

namespace supertrim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ode::Options ode_options(const SolverOptions& o) {
  ode::Options oo;
  oo.rtol = o.rtol;
  oo.atol = o.atol;
  oo.max_step = o.max_step;
  oo.max_steps = o.max_steps;
  return oo;
}

void check_time(double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("time must be finite and nonnegative");
}

void check_model(const MotionCtmc& motion, const Field& alpha, const Field& beta, const char* op) {
  require_same_size(motion.size(), alpha.size(), op);
  require_same_size(motion.size(), beta.size(), op);
  if (alpha.min() < 0.0) throw DomainError(std::string(op) + ": alpha must be nonnegative");
}

Eigen::VectorXd loglaplace_residual(const MotionCtmc& motion, const Field& alpha, const Field& beta,
                                    const Eigen::VectorXd& u) {
  return motion.rates() * u + beta.values().cwiseProduct(u) - alpha.values().cwiseProduct(u.cwiseAbs2());
}

SemigroupResult finish(Eigen::VectorXd u, const ode::Stats& stats) {
  SemigroupResult r{Field(std::move(u)), {}, {}};
  r.infinite.assign(r.value.size(), false);
  r.diagnostics.steps = stats.accepted;
  r.diagnostics.rejected = stats.rejected;
  return r;
}

Eigen::VectorXd integrate_loglaplace(const MotionCtmc& motion, const Field& alpha, const Field& beta,
                                     Eigen::VectorXd u, double t, const SolverOptions& options, ode::Stats* stats) {
  const Eigen::MatrixXd& q = motion.rates();
  const Eigen::VectorXd& a = alpha.values();
  const Eigen::VectorXd& b = beta.values();
  auto rhs = [&](const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    dy.noalias() = q * y;
    dy += b.cwiseProduct(y) - a.cwiseProduct(y.cwiseAbs2());
  };
  auto clip = [](Eigen::VectorXd& y) { y = y.cwiseMax(0.0); };
  *stats = ode::integrate(rhs, u, 0.0, t, ode_options(options), clip);
  return u;
}

}  // namespace

bool SemigroupResult::any_infinite() const {
  return std::any_of(infinite.begin(), infinite.end(), [](bool b) { return b; });
}

SemigroupResult solve_loglaplace(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Field& f,
                                 double t, const SolverOptions& options) {
  check_model(motion, alpha, beta, "solve_loglaplace");
  require_same_size(motion.size(), f.size(), "solve_loglaplace");
  if (f.min() < 0.0) throw DomainError("solve_loglaplace: initial field must be nonnegative");
  check_time(t);
  ode::Stats stats;
  auto u = integrate_loglaplace(motion, alpha, beta, f.values(), t, options, &stats);
  return finish(std::move(u), stats);
}

SemigroupResult solve_generating(const MotionCtmc& motion, const Field& b, const Field& d, const Field& f, double t,
                                 const SolverOptions& options) {
  require_same_size(motion.size(), b.size(), "solve_generating");
  require_same_size(motion.size(), d.size(), "solve_generating");
  require_same_size(motion.size(), f.size(), "solve_generating");
  if (b.min() < 0.0 || d.min() < 0.0) throw DomainError("solve_generating: rates must be nonnegative");
  if (!f.within(0.0, 1.0)) throw DomainError("solve_generating: initial field must lie in [0, 1]");
  check_time(t);

  const Eigen::MatrixXd& q = motion.rates();
  const Eigen::VectorXd& bv = b.values();
  const Eigen::VectorXd& dv = d.values();
  auto rhs = [&](const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    dy.noalias() = q * y;
    dy += bv.cwiseProduct(y).cwiseProduct((1.0 - y.array()).matrix()) - dv.cwiseProduct(y);
  };
  Eigen::VectorXd u = f.values();
  const auto stats = ode::integrate(rhs, u, 0.0, t, ode_options(options));

  const double slack = 1e-8;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (u[i] < -slack || u[i] > 1.0 + slack || !std::isfinite(u[i])) {
      std::ostringstream os;
      os << "solve_generating: solution left [0, 1] at state " << i << " (value " << u[i] << ")";
      throw SolverError(os.str());
    }
  }
  u = u.cwiseMax(0.0).cwiseMin(1.0);
  return finish(std::move(u), stats);
}

SemigroupResult u_infinity(const MotionCtmc& motion, const Field& alpha, const Field& beta, double t,
                           const SolverOptions& options) {
  check_model(motion, alpha, beta, "u_infinity");
  check_time(t);
  if (t == 0.0) throw DomainError("u_infinity requires t > 0");
  if (!(options.cap > 0.0)) throw DomainError("u_infinity: cap must be positive");

  const auto n = static_cast<Eigen::Index>(motion.size());
  SolverDiagnostics diag;
  auto solve_cap = [&](double cap) {
    ode::Stats stats;
    auto u = integrate_loglaplace(motion, alpha, beta, Eigen::VectorXd::Constant(n, cap), t, options, &stats);
    diag.steps += stats.accepted;
    diag.rejected += stats.rejected;
    return u;
  };

  // 1/U_t(C) is affine in 1/C to leading order, so 2/U_t(2C) - 1/U_t(C)
  // extrapolates 1/U_t(infinity) with an O(C^-2) remainder.
  double cap = options.cap;
  Eigen::VectorXd prev = solve_cap(cap);
  Eigen::VectorXd prev_extrapolant = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<int> state(static_cast<std::size_t>(n), 0);  // 0 open, 1 finite, 2 infinite
  std::vector<int> linear_growth(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd value = Eigen::VectorXd::Zero(n);

  for (int k = 1; k <= options.max_doublings; ++k) {
    cap *= 2.0;
    Eigen::VectorXd cur = solve_cap(cap);
    ++diag.iterations;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& s = state[static_cast<std::size_t>(i)];
      if (s != 0) continue;
      // Near the absolute tolerance 1/u is mostly integration noise; such a
      // component is finite and known to within that tolerance.
      const double tiny = 1e4 * options.atol;
      if (cur[i] <= tiny && prev[i] <= tiny) {
        s = 1;
        value[i] = std::max(cur[i], 0.0);
        continue;
      }
      const double w_prev = 1.0 / prev[i];
      const double w = 1.0 / cur[i];
      const double extrapolant = 2.0 * w - w_prev;
      if (extrapolant <= 1e-6 * w) {
        if (++linear_growth[static_cast<std::size_t>(i)] >= 3) s = 2;
      } else {
        linear_growth[static_cast<std::size_t>(i)] = 0;
        const double last = prev_extrapolant[i];
        if (std::isfinite(last) && std::abs(extrapolant - last) <= options.saturation_rtol * extrapolant) {
          s = 1;
          value[i] = 1.0 / extrapolant;
        }
      }
      prev_extrapolant[i] = extrapolant;
    }
    prev = std::move(cur);
    if (std::all_of(state.begin(), state.end(), [](int s) { return s != 0; })) break;
  }

  SemigroupResult result{Field(Eigen::VectorXd::Zero(n)), std::vector<bool>(static_cast<std::size_t>(n), false),
                         diag};
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int s = state[static_cast<std::size_t>(i)];
    if (s == 1) {
      out[i] = value[i];
    } else {
      if (!options.allow_infinite) {
        std::ostringstream os;
        os << "u_infinity: U_t(C) does not saturate in C at state " << i;
        throw SolverError(os.str());
      }
      out[i] = 0.0;
      result.infinite[static_cast<std::size_t>(i)] = true;
    }
  }
  result.value = Field(out);
  return result;
}

SurvivalResult survival_p(const MotionCtmc& motion, const Field& alpha, const Field& beta,
                          const SolverOptions& options) {
  check_model(motion, alpha, beta, "survival_p");
  if (!alpha.all_positive()) throw DomainError("survival_p requires alpha > 0 everywhere");

  const double beta_scale = std::max(beta.values().cwiseAbs().maxCoeff(), 0.05);
  const double horizon = std::clamp(50.0 / beta_scale, 10.0, 1000.0);
  SolverOptions strict = options;
  strict.allow_infinite = false;
  const auto warm = u_infinity(motion, alpha, beta, horizon, strict);

  const Eigen::MatrixXd& q = motion.rates();
  const Eigen::VectorXd& a = alpha.values();
  const Eigen::VectorXd& b = beta.values();
  Eigen::VectorXd p = warm.value.values();
  Eigen::VectorXd residual = loglaplace_residual(motion, alpha, beta, p);
  double norm = residual.cwiseAbs().maxCoeff();
  int iterations = 0;

  // At least one step is taken so the warm start is always polished.
  while (norm >= options.newton_tol || iterations == 0) {
    if (++iterations > options.newton_max_iter) {
      std::ostringstream os;
      os << "survival_p: Newton did not converge (residual " << norm << ")";
      throw SolverError(os.str());
    }
    Eigen::MatrixXd jacobian = q;
    jacobian.diagonal() += b - 2.0 * a.cwiseProduct(p);
    const Eigen::VectorXd step = jacobian.fullPivLu().solve(-residual);
    if (!step.allFinite()) throw SolverError("survival_p: singular Newton system");

    double damping = 1.0;
    bool improved = false;
    for (int halvings = 0; halvings < 40; ++halvings, damping *= 0.5) {
      Eigen::VectorXd candidate = (p + damping * step).cwiseMax(0.0);
      Eigen::VectorXd r = loglaplace_residual(motion, alpha, beta, candidate);
      const double rn = r.cwiseAbs().maxCoeff();
      if (rn < norm) {
        p = std::move(candidate);
        residual = std::move(r);
        norm = rn;
        improved = true;
        break;
      }
    }
    if (!improved) {
      if (norm < options.newton_tol) break;
      std::ostringstream os;
      os << "survival_p: Newton stagnated at residual " << norm;
      throw SolverError(os.str());
    }
  }

  SurvivalResult out;
  out.p = Field(p);
  out.residual = norm;
  out.warm_start = warm.value;
  out.warm_horizon = horizon;
  out.newton_iterations = iterations;

  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
  for (double t : {0.5, 1.0, 2.0}) {
    const auto moved = solve_loglaplace(motion, alpha, beta, out.p, t, options);
    const double err = (moved.value.values() - p).cwiseAbs().maxCoeff();
    out.fixed_point_error = std::max(out.fixed_point_error, err);
  }
  if (out.fixed_point_error > options.fixed_point_tol * scale) {
    std::ostringstream os;
    os << "survival_p: U_t p = p check failed (error " << out.fixed_point_error << ")";
    throw SolverError(os.str());
  }
  return out;
}

Field linear_moment(const MotionCtmc& motion, const Field& beta, const Field& f, double t) {
  require_same_size(motion.size(), beta.size(), "linear_moment");
  require_same_size(motion.size(), f.size(), "linear_moment");
  check_time(t);
  Eigen::MatrixXd generator = motion.rates();
  generator.diagonal() += beta.values();
  const Eigen::MatrixXd propagator = (generator * t).exp();
  return Field(Eigen::VectorXd(propagator * f.values()));
}

double covariance_ref(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Measure& mu,
                      const Field& f, const Field& g, double t, double tolerance) {
  check_model(motion, alpha, beta, "covariance_ref");
  require_same_size(motion.size(), mu.size(), "covariance_ref");
  require_same_size(motion.size(), f.size(), "covariance_ref");
  require_same_size(motion.size(), g.size(), "covariance_ref");
  check_time(t);
  if (t == 0.0 || alpha.max() == 0.0) return 0.0;

  Eigen::MatrixXd generator = motion.rates();
  generator.diagonal() += beta.values();
  const Eigen::VectorXd& a = alpha.values();
  auto integrand = [&](double s) {
    const Eigen::MatrixXd late = (generator * (t - s)).exp();
    const Eigen::VectorXd vf = late * f.values();
    const Eigen::VectorXd vg = late * g.values();
    const Eigen::VectorXd inner = a.cwiseProduct(vf.cwiseProduct(vg));
    return mu.masses().dot((generator * s).exp() * inner);
  };
  double error = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, t, 15, tolerance, &error);
  if (!std::isfinite(value) || error > tolerance * std::max(1.0, std::abs(value))) {
    std::ostringstream os;
    os << "covariance_ref: quadrature did not converge (error estimate " << error << ")";
    throw SolverError(os.str());
  }
  return 2.0 * value;
}

double verify_weighted_identity(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Field& h,
                                const Field& f, double t, const SolverOptions& options) {
  check_model(motion, alpha, beta, "verify_weighted_identity");
  require_same_size(motion.size(), h.size(), "verify_weighted_identity");
  require_same_size(motion.size(), f.size(), "verify_weighted_identity");
  if (!h.all_positive()) throw DomainError("verify_weighted_identity requires h > 0");
  if (f.min() < 0.0) throw DomainError("verify_weighted_identity requires f >= 0");
  check_time(t);
  if (t == 0.0) return 0.0;  // both sides are the identity

  const Eigen::VectorXd& hv = h.values();
  const MotionCtmc weighted = h_transform(motion, h);
  const Field weighted_alpha(Eigen::VectorXd(hv.cwiseProduct(alpha.values())));
  const Field weighted_beta(Eigen::VectorXd(beta.values() + (motion.rates() * hv).cwiseQuotient(hv)));

  const auto lhs = solve_loglaplace(weighted, weighted_alpha, weighted_beta, f, t, options);
  const auto rhs =
      solve_loglaplace(motion, alpha, beta, Field(Eigen::VectorXd(hv.cwiseProduct(f.values()))), t, options);
  const Eigen::VectorXd rhs_scaled = rhs.value.values().cwiseQuotient(hv);
  return (lhs.value.values() - rhs_scaled).cwiseAbs().maxCoeff();
}

Field gamma_from_h(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Field& h,
                   double tolerance) {
  check_model(motion, alpha, beta, "gamma_from_h");
  require_same_size(motion.size(), h.size(), "gamma_from_h");
  if (!h.all_positive()) throw DomainError("gamma_from_h requires h > 0");
  const Eigen::VectorXd& hv = h.values();
  Eigen::VectorXd gamma = -loglaplace_residual(motion, alpha, beta, hv).cwiseQuotient(hv);
  for (Eigen::Index i = 0; i < gamma.size(); ++i) {
    if (gamma[i] < -tolerance) {
      std::ostringstream os;
      os << "inadmissible h: gamma at state " << i << " is " << gamma[i] << " < 0";
      throw PreconditionError(os.str());
    }
  }
  return Field(Eigen::VectorXd(gamma.cwiseMax(0.0)));
}

FlowValue flow_u_infinity(const MotionFlow1D& motion, const ScalarFunction& alpha, const ScalarFunction& beta,
                          double x, double t, const SolverOptions& options) {
  if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("flow_u_infinity requires finite t > 0");
  if (x < motion.lower() || x > motion.upper()) throw DomainError("flow_u_infinity: start point outside the interval");

  // Forward form of the reciprocal equation: with B(s) = int_0^s beta(xi),
  // w(0) = int_0^t alpha(xi_s) exp(-B(s)) ds.
  auto position = [&](double xi) { return std::clamp(xi, motion.lower(), motion.upper()); };
  auto rhs = [&](const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    const double xi = position(y[0]);
    dy[0] = motion.velocity(xi);
    dy[1] = beta(xi);
    dy[2] = alpha(xi) * std::exp(std::min(-y[1], 700.0));
  };
  Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
  y[0] = x;
  ode::Options oo = ode_options(options);
  oo.rtol = std::min(options.rtol, motion.tolerance());
  try {
    ode::integrate(rhs, y, 0.0, t, oo);
  } catch (const SolverError& e) {
    throw SolverError(std::string("flow_u_infinity: trajectory integration failed: ") + e.what());
  }
  const double w0 = y[2];
  if (!(w0 > options.atol)) return {kInf, true};
  return {1.0 / w0, false};
}

double stabilization_time(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Field& p,
                          double fraction, const SolverOptions& options) {
  if (!p.all_positive()) throw PreconditionError("stabilization_time requires min p > 0");
  const double target = fraction * p.min();
  auto gap = [&](double tau) {
    const auto u = u_infinity(motion, alpha, beta, tau, options);
    if (u.any_infinite()) return kInf;
    return (u.value.values() - p.values()).cwiseAbs().maxCoeff();
  };
  double hi = 1.0;
  while (gap(hi) >= target) {
    hi *= 2.0;
    if (hi > 1e4) throw SolverError("stabilization_time: U_t(infinity) does not approach p");
  }
  double lo = hi / 2.0;
  if (gap(lo) < target) return lo;
  while (hi - lo > 0.01 * hi) {
    const double mid = 0.5 * (lo + hi);
    (gap(mid) < target ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace supertrim
