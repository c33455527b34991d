#include <doctest.h>

#include <cmath>

#include "supertrim/error.hpp"
#include "supertrim/rng.hpp"
#include "supertrim/stats.hpp"

using namespace supertrim;

namespace {

std::vector<std::int64_t> poisson_draws(RngStream& rng, double mean, int n) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(n));
  for (auto& v : out) v = rng.poisson(mean);
  return out;
}

}  // namespace

TEST_CASE("tail probabilities") {
  CHECK(chi_square_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(chi_square_sf(0.0, 3) == 1.0);
  CHECK(chi_square_sf(18.307038053275146, 10) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(normal_two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(normal_two_sided_p(0.0) == 1.0);
  CHECK(normal_two_sided_p(-2.5758293035489) == doctest::Approx(0.01).epsilon(1e-9));
}

TEST_CASE("mean and standard error") {
  const double xs[] = {1.0, 2.0, 3.0, 4.0};
  const auto e = estimate_mean(xs);
  CHECK(e.mean == 2.5);
  CHECK(e.se == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
  CHECK(estimate_mean(std::span<const double>(xs, 1)).se == 0.0);
  CHECK_THROWS_AS(estimate_mean(std::span<const double>()), DomainError);

  // SE shrinks like 1/sqrt(n).
  RngStream rng(1, 0, Purpose::kSynthetic);
  std::vector<double> big(40000);
  for (auto& v : big) v = rng.normal();
  const auto small = estimate_mean(std::span<const double>(big.data(), 10000));
  const auto large = estimate_mean(big);
  CHECK(small.se / large.se == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("covariance estimate") {
  RngStream rng(2, 0, Purpose::kSynthetic);
  std::vector<double> x(20000), y(20000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = rng.normal();
    x[i] = z + rng.normal();
    y[i] = 2.0 * z;
  }
  const auto c = covariance_estimate(x, y);
  CHECK(std::abs(c.mean - 2.0) < 4.0 * c.se);
  CHECK(c.se > 0.0);
}

TEST_CASE("laplace and generating functional estimators") {
  const std::vector<Measure> xs = {Measure{1.0, 0.0}, Measure{0.0, 2.0}};
  const auto l = laplace_estimate(xs, Field{1.0, 0.5});
  CHECK(l.mean == doctest::Approx(std::exp(-1.0)));
  const std::vector<PointMeasure> ps = {PointMeasure(2, {{0, 1}, {0, 2}}), PointMeasure(2, {{1, 3}})};
  const auto g = generating_estimate(ps, Field{0.5, 0.25});
  CHECK(g.mean == doctest::Approx(0.5 * (0.25 + 0.75)));
}

TEST_CASE("poisson goodness of fit") {
  RngStream rng(3, 0, Purpose::kSynthetic);
  CHECK(poisson_gof(poisson_draws(rng, 2.5, 5000), 2.5).passed);
  CHECK(poisson_gof(poisson_draws(rng, 0.05, 5000), 0.05).passed);
  CHECK_FALSE(poisson_gof(poisson_draws(rng, 2.5, 5000), 2.8).passed);
  // Over-dispersed counts with the right mean.
  std::vector<std::int64_t> mixed;
  for (int i = 0; i < 5000; ++i) mixed.push_back(rng.poisson(i % 2 ? 1.0 : 4.0));
  CHECK_FALSE(poisson_gof(mixed, 2.5).passed);
  const std::vector<std::int64_t> zeros(100, 0);
  CHECK(poisson_gof(zeros, 0.0).passed);
  CHECK_FALSE(poisson_gof(std::vector<std::int64_t>{0, 1}, 0.0).passed);
}

TEST_CASE("two-sample tests") {
  RngStream rng(4, 0, Purpose::kSynthetic);
  const auto a = poisson_draws(rng, 3.0, 3000);
  CHECK(two_sample_histogram("same", a, a).p_value == doctest::Approx(1.0));
  CHECK(two_sample_histogram("null", a, poisson_draws(rng, 3.0, 3000)).passed);
  CHECK_FALSE(two_sample_histogram("shift", a, poisson_draws(rng, 3.4, 3000)).passed);
  const std::vector<std::int64_t> ones(50, 1);
  CHECK(two_sample_histogram("single bin", ones, ones).statistic == 0.0);

  std::vector<PointMeasure> pa, pb;
  IdSource ids;
  for (int i = 0; i < 2000; ++i) {
    pa.push_back(pois_sample(Measure{1.0, 2.0}, rng, ids));
    pb.push_back(pois_sample(Measure{1.0, 2.0}, rng, ids));
  }
  CHECK(two_sample_counts(pa, pb).passed);
  CHECK_THROWS_AS(two_sample_counts({}, {}), DomainError);

  CHECK(two_proportion_test("null", 300, 1000, 310, 1000).passed);
  CHECK_FALSE(two_proportion_test("diff", 300, 1000, 400, 1000).passed);
}

TEST_CASE("independence and z tests") {
  RngStream rng(5, 0, Purpose::kSynthetic);
  std::vector<double> x(5000), y(5000), z(5000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.normal();
    y[i] = rng.normal();
    z[i] = x[i] + 0.3 * rng.normal();
  }
  CHECK(independence_test("indep", x, y).passed);
  CHECK_FALSE(independence_test("dep", x, z).passed);

  const Estimate e{1.0, 0.1, 100};
  CHECK(z_test("z", e, 1.2).passed);
  CHECK_FALSE(z_test("z", e, 1.3).passed);
  const auto band = band_check("band", e, 1.35, 4.0);
  CHECK(band.passed);
  CHECK(band.statistic == doctest::Approx(3.5));
  CHECK_FALSE(band_check("band", e, 1.45, 4.0).passed);

  const auto combined = bonferroni("b", {TestResult{"a", 0, 0.2}, TestResult{"b", 0, 0.004}});
  CHECK(combined.p_value == doctest::Approx(0.008));
  CHECK_FALSE(combined.passed);
}

TEST_CASE("null rejection rates stay near the nominal level") {
  // Smaller version of the calibration run in the acceptance suite.
  const int reps = 300;
  int gof = 0, hist = 0, prop = 0, indep = 0, z = 0;
  for (int r = 0; r < reps; ++r) {
    RngStream rng(6, static_cast<std::uint64_t>(r), Purpose::kSynthetic);
    gof += !poisson_gof(poisson_draws(rng, 1.7, 500), 1.7).passed;
    hist += !two_sample_histogram("h", poisson_draws(rng, 2.0, 400), poisson_draws(rng, 2.0, 400)).passed;
    prop += !two_proportion_test("p", static_cast<std::size_t>(rng.binomial(500, 0.3)), 500,
                                 static_cast<std::size_t>(rng.binomial(500, 0.3)), 500)
                 .passed;
    std::vector<double> x(300), y(300), s(300);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.normal();
      y[i] = rng.exponential();
      s[i] = rng.exponential();
    }
    indep += !independence_test("i", x, y).passed;
    z += !z_test("z", estimate_mean(s), 1.0).passed;
  }
  // Binomial(300, 0.01) exceeds 12 with probability below 1e-4.
  for (int rejections : {gof, hist, prop, indep, z}) CHECK(rejections <= 12);
}
