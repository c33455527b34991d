#include <doctest.h>

#include <cmath>

#include "supertrim/error.hpp"
#include "supertrim/model.hpp"
#include "supertrim/stats.hpp"

using namespace supertrim;

namespace {

Eigen::MatrixXd three_state() {
  Eigen::MatrixXd q(3, 3);
  q << -1.5, 1.0, 0.5, 0.5, -1.0, 0.5, 1.0, 1.0, -2.0;
  return q;
}

}  // namespace

TEST_CASE("generator validation names the bad row") {
  Eigen::MatrixXd q(2, 2);
  q << -1.0, 1.0, 1.0, -0.5;
  try {
    MotionCtmc m(q);
    FAIL("accepted a non-conservative row");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
  q << -1.0, 1.0, -0.5, 0.5;
  CHECK_THROWS_AS(MotionCtmc{q}, DomainError);
  const double rows[] = {-2.0, 2.0, 3.0, -3.0};
  CHECK(MotionCtmc::from_rows(2, rows).rate(1, 0) == 3.0);
}

TEST_CASE("compensated h-transform: conservative rows and generator identity") {
  const MotionCtmc m(three_state());
  const Field h{1.0, 2.0, 0.5};
  const auto mh = h_transform(m, h);
  CHECK(mh.rates().rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(mh.rate(0, 1) == doctest::Approx(1.0 * 2.0 / 1.0));
  CHECK(mh.rate(1, 2) == doctest::Approx(0.5 * 0.5 / 2.0));
  // Q^h f = (Q(hf) - (Qh) f) / h
  const Field f{0.3, -1.2, 2.5};
  const Field hf(Eigen::VectorXd(h.values().cwiseProduct(f.values())));
  const auto lhs = apply_generator(mh, f).values();
  const Eigen::VectorXd rhs =
      (apply_generator(m, hf).values() - apply_generator(m, h).values().cwiseProduct(f.values()))
          .cwiseQuotient(h.values());
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  const Field zero_somewhere{1.0, 0.0, 1.0};
  CHECK_THROWS_AS(h_transform(m, zero_somewhere), DomainError);
}

TEST_CASE("girsanov weight is 1 for constant h and telescopes on a fixed path") {
  const MotionCtmc m(three_state());
  JumpPath path;
  path.start = 0;
  path.horizon = 2.0;
  path.jumps = {{0.4, 1}, {1.1, 2}, {1.7, 0}};
  CHECK(girsanov_weight(m, Field::constant(3, 3.0), path) == doctest::Approx(1.0).epsilon(1e-14));

  const Field h{1.0, 2.0, 0.5};
  const auto qh = apply_generator(m, h).values();
  // Holding times 0.4, 0.7, 0.6, 0.3 in states 0, 1, 2, 0.
  const double integral = qh[0] / h[0] * 0.7 + qh[1] / h[1] * 0.7 + qh[2] / h[2] * 0.6;
  CHECK(girsanov_weight(m, h, path) == doctest::Approx(std::exp(-integral)).epsilon(1e-12));
}

TEST_CASE("jump path validation and lookup") {
  JumpPath p;
  p.start = 1;
  p.horizon = 1.0;
  p.jumps = {{0.25, 0}, {0.5, 2}};
  CHECK_NOTHROW(p.validate(3));
  CHECK(p.state_at(0.0) == 1);
  CHECK(p.state_at(0.25) == 0);
  CHECK(p.state_at(0.49) == 0);
  CHECK(p.state_at(1.0) == 2);
  CHECK_THROWS_AS(p.validate(2), DomainError);
  p.jumps = {{0.5, 0}, {0.25, 2}};
  CHECK_THROWS_AS(p.validate(3), DomainError);
}

TEST_CASE("ctmc paths: occupation law at t = 5 matches the transition matrix") {
  Eigen::MatrixXd q(2, 2);
  q << -1.0, 1.0, 1.0, -1.0;
  const MotionCtmc m(q);
  // exp(5Q) row 0 = (1 + e^{-10}, 1 - e^{-10}) / 2 = (0.5000227, 0.4999773)
  const double p00 = 0.5 * (1.0 + std::exp(-10.0));
  CHECK(p00 == doctest::Approx(0.5000227).epsilon(1e-7));
  RngStream rng(11, 0, Purpose::kPath);
  const int n = 40000;
  std::vector<double> at0(n);
  for (int i = 0; i < n; ++i) {
    const auto path = sample_ctmc_path(m, 0, 5.0, rng);
    CHECK_NOTHROW(path.validate(2));
    at0[static_cast<std::size_t>(i)] = path.end_state() == 0 ? 1.0 : 0.0;
  }
  const auto est = estimate_mean(at0);
  CHECK(std::abs(est.mean - p00) < 4.0 * est.se);
}

TEST_CASE("poisson sampling and thinning") {
  const Measure mu{2.0, 0.5, 0.0};
  RngStream rng(2, 0, Purpose::kPoissonize);
  IdSource ids;
  const int reps = 20000;
  std::vector<std::int64_t> c0, c1, kept;
  std::int64_t at2 = 0;
  for (int r = 0; r < reps; ++r) {
    const auto nu = pois_sample(mu, rng, ids);
    const auto counts = nu.counts();
    c0.push_back(counts[0]);
    c1.push_back(counts[1]);
    at2 += counts[2];
    auto sorted = nu.sorted();
    for (std::size_t i = 1; i < sorted.size(); ++i) REQUIRE(sorted[i - 1].id < sorted[i].id);
    kept.push_back(thin(nu, Field{0.25, 1.0, 1.0}, rng).counts()[0]);
  }
  CHECK(at2 == 0);
  CHECK(poisson_gof(c0, 2.0).passed);
  CHECK(poisson_gof(c1, 0.5).passed);
  // Thinning Pois(2) by 1/4 gives Pois(0.5).
  CHECK(poisson_gof(kept, 0.5).passed);
  CHECK_FALSE(poisson_gof(kept, 0.6).passed);
}

TEST_CASE("point measures") {
  const PointMeasure nu(3, {{2, 7}, {0, 3}, {2, 5}});
  CHECK(nu.counts() == std::vector<std::int64_t>{1, 0, 2});
  const StateIndex subset[] = {0, 1};
  CHECK(nu.count_in(subset) == 1);
  CHECK(nu.contains(5));
  CHECK_FALSE(nu.contains(4));
  CHECK(nu.sorted().front().id == 3);
  const std::vector<Atom> reused = {{0, 1}, {1, 1}};
  const std::vector<Atom> outside = {{2, 1}};
  CHECK_THROWS_AS(PointMeasure(3, reused), DomainError);
  CHECK_THROWS_AS(PointMeasure(2, outside), DomainError);
  CHECK_THROWS_AS(Measure(std::vector<double>{1.0, -0.1}), DomainError);
  const Measure mu{1.0, 2.0};
  CHECK(mu.integrate(Field{3.0, -1.0}) == doctest::Approx(1.0));
}
