#include <doctest.h>

#include <cmath>

#include "supertrim/error.hpp"
#include "supertrim/semigroup.hpp"

using namespace supertrim;

namespace {

MotionCtmc single() { return MotionCtmc(Eigen::MatrixXd::Zero(1, 1)); }

MotionCtmc two_state(double a, double b) {
  Eigen::MatrixXd q(2, 2);
  q << -a, a, b, -b;
  return MotionCtmc(q);
}

// Logistic closed form of u' = b u - a u^2, u(0) = f.
double logistic(double a, double b, double f, double t) {
  if (b == 0.0) return f / (1.0 + a * f * t);
  const double e = std::exp(b * t);
  return b * f * e / (b + a * f * (e - 1.0));
}

// Test-side Newton for Qp + beta p - alpha p^2 = 0 on two states.
Eigen::Vector2d newton_p(const Eigen::Matrix2d& q, Eigen::Vector2d alpha, Eigen::Vector2d beta) {
  Eigen::Vector2d p(5.0, 5.0);
  for (int it = 0; it < 100; ++it) {
    const Eigen::Vector2d F = q * p + beta.cwiseProduct(p) - alpha.cwiseProduct(p.cwiseProduct(p));
    Eigen::Matrix2d J = q;
    J.diagonal() += beta - 2.0 * alpha.cwiseProduct(p);
    p -= J.partialPivLu().solve(F);
  }
  return p;
}

}  // namespace

TEST_CASE("single-site U_t(inf) closed form") {
  for (double a : {0.5, 1.0, 2.0}) {
    for (double b : {0.5, 1.0, 2.0}) {
      for (double t : {0.1, 1.0, 10.0}) {
        const auto u = u_infinity(single(), Field{a}, Field{b}, t);
        REQUIRE_FALSE(u.any_infinite());
        const double expected = b / (a * (1.0 - std::exp(-b * t)));
        CHECK(std::abs(u.value[0] / expected - 1.0) < 1e-6);
      }
    }
    for (double t : {0.1, 1.0, 10.0}) {
      const auto u = u_infinity(single(), Field{a}, Field{0.0}, t);
      CHECK(std::abs(u.value[0] * a * t - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("single-site finite f follows the logistic solution") {
  for (double beta : {-0.7, 0.0, 1.3}) {
    for (double f : {0.2, 1.0, 6.0}) {
      const auto u = solve_loglaplace(single(), Field{0.8}, Field{beta}, Field{f}, 2.5);
      CHECK(u.value[0] == doctest::Approx(logistic(0.8, beta, f, 2.5)).epsilon(1e-8));
    }
  }
}

TEST_CASE("generating semigroup: logistic with rate b - d") {
  const double b = 1.5, d = 0.4;
  for (double f : {0.1, 0.5, 1.0}) {
    const auto u = solve_generating(single(), Field{b}, Field{d}, Field{f}, 3.0);
    CHECK(u.value[0] == doctest::Approx(logistic(b, b - d, f, 3.0)).epsilon(1e-8));
  }
  CHECK_THROWS_AS(solve_generating(single(), Field{b}, Field{d}, Field{1.5}, 1.0), DomainError);
}

TEST_CASE("constant f on a homogeneous chain reduces to one site") {
  const auto m = two_state(0.7, 1.9);
  const auto u = solve_loglaplace(m, Field{0.5, 0.5}, Field{0.3, 0.3}, Field{2.0, 2.0}, 1.7);
  CHECK(u.value[0] == doctest::Approx(logistic(0.5, 0.3, 2.0, 1.7)).epsilon(1e-8));
  CHECK(u.value[1] == doctest::Approx(u.value[0]).epsilon(1e-10));
}

TEST_CASE("survival p against an independent Newton solve") {
  const auto m = two_state(1.0, 1.0);
  const Field alpha{1.0, 1.0}, beta{2.0, 0.5};
  const auto s = survival_p(m, alpha, beta);
  const Eigen::Vector2d ref = newton_p(m.rates(), {1.0, 1.0}, {2.0, 0.5});
  CHECK(s.p[0] == doctest::Approx(ref[0]).epsilon(1e-10));
  CHECK(s.p[1] == doctest::Approx(ref[1]).epsilon(1e-10));
  // Frozen from the Newton oracle above.
  CHECK(s.p[0] == doctest::Approx(1.6427366759075003).epsilon(1e-10));
  CHECK(s.p[1] == doctest::Approx(1.0558471104641233).epsilon(1e-10));
  CHECK(s.residual < 1e-8);
  CHECK(s.fixed_point_error < 1e-7);
  // The warm start decreases to p.
  for (std::size_t x = 0; x < 2; ++x) CHECK(s.warm_start[x] >= s.p[x] - 1e-9);
}

TEST_CASE("subcritical chain has p = 0") {
  const auto s = survival_p(two_state(1.0, 2.0), Field{1.0, 1.0}, Field{-0.5, 0.2});
  CHECK(s.p.max() < 1e-6);
}

TEST_CASE("U_t(inf) is infinite where mass can sit without branching") {
  // alpha = 0 at state 1: part of an infinite mass never leaves state 1 and
  // survives. From state 0 the flux into state 1 near time 0 is also infinite.
  const auto m = two_state(1.0, 3.0);
  const auto u = u_infinity(m, Field{1.0, 0.0}, Field{0.0, 0.0}, 1.0);
  CHECK(u.infinite[0]);
  CHECK(u.infinite[1]);
  CHECK(u.value[1] == 0.0);
  SolverOptions strict;
  strict.allow_infinite = false;
  CHECK_THROWS_AS(u_infinity(m, Field{1.0, 0.0}, Field{0.0, 0.0}, 1.0, strict), SolverError);
  // Positive alpha everywhere: finite.
  const auto v = u_infinity(m, Field{1.0, 0.2}, Field{0.0, 0.0}, 1.0);
  CHECK_FALSE(v.any_infinite());
  CHECK(v.value[1] > v.value[0]);
}

TEST_CASE("linear moment and covariance closed forms on one site") {
  const double a = 0.6, b = 0.4, t = 1.5, m = 0.8;
  CHECK(linear_moment(single(), Field{b}, Field{2.0}, t)[0] == doctest::Approx(2.0 * std::exp(b * t)));
  const double var = m * 2.0 * a * std::exp(b * t) * (std::exp(b * t) - 1.0) / b;
  CHECK(covariance_ref(single(), Field{a}, Field{b}, Measure{m}, Field{1.0}, Field{1.0}, t) ==
        doctest::Approx(var).epsilon(1e-7));
  // beta = 0: 2 a m t
  CHECK(covariance_ref(single(), Field{a}, Field{0.0}, Measure{m}, Field{1.0}, Field{1.0}, t) ==
        doctest::Approx(2.0 * a * m * t).epsilon(1e-7));
}

TEST_CASE("weighted identity holds for random-looking tuples") {
  Eigen::MatrixXd q(3, 3);
  q << -1.5, 1.0, 0.5, 0.5, -1.0, 0.5, 1.0, 1.0, -2.0;
  const MotionCtmc m(q);
  CHECK(verify_weighted_identity(m, Field{0.5, 0.3, 0.4}, Field{0.2, 0.3, -0.1}, Field{1.0, 2.0, 0.5},
                                 Field{1.0, 0.0, 3.0}, 1.3) < 1e-6);
  CHECK(verify_weighted_identity(m, Field{1.0, 1.0, 1.0}, Field{2.0, 0.5, 0.0}, Field{0.3, 1.7, 1.1},
                                 Field{2.0, 0.1, 0.4}, 0.4) < 1e-6);
}

TEST_CASE("gamma from h") {
  const auto m = two_state(1.0, 1.0);
  const auto g = gamma_from_h(m, Field{1.0, 1.0}, Field{2.0, 0.5}, Field{2.5, 1.5});
  // -(Qh + beta h - alpha h^2) / h
  CHECK(g[0] == doctest::Approx(-(-1.0 + 5.0 - 6.25) / 2.5));
  CHECK(g[1] == doctest::Approx(-(1.0 + 0.75 - 2.25) / 1.5));
  CHECK_THROWS_AS(gamma_from_h(single(), Field{1.0}, Field{2.0}, Field{0.5}), PreconditionError);
  // h = p gives gamma = 0 up to the solver tolerance.
  const auto s = survival_p(m, Field{1.0, 1.0}, Field{2.0, 0.5});
  CHECK(gamma_from_h(m, Field{1.0, 1.0}, Field{2.0, 0.5}, s.p).max() < 1e-7);
}

TEST_CASE("flow solver with zero velocity reduces to one site") {
  const MotionFlow1D still([](double) { return 0.0; });
  for (double b : {0.5, 2.0}) {
    const auto v = flow_u_infinity(
        still, [](double) { return 1.5; }, [b](double) { return b; }, 0.3, 2.0);
    REQUIRE_FALSE(v.infinite);
    CHECK(v.value == doctest::Approx(b / (1.5 * (1.0 - std::exp(-2.0 * b)))).epsilon(1e-6));
  }
  const auto inf = flow_u_infinity(
      still, [](double) { return 0.0; }, [](double) { return 0.0; }, 0.0, 1.0);
  CHECK(inf.infinite);
}

TEST_CASE("stabilization time shrinks the gap below the requested fraction") {
  const auto m = two_state(1.0, 1.0);
  const Field alpha{1.0, 1.0}, beta{2.0, 0.5};
  const auto s = survival_p(m, alpha, beta);
  const double tau = stabilization_time(m, alpha, beta, s.p);
  CHECK(tau > 0.0);
  const auto u = u_infinity(m, alpha, beta, tau);
  CHECK((u.value.values() - s.p.values()).cwiseAbs().maxCoeff() < 0.01 * s.p.min());
}
