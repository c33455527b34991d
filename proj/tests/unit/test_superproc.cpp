#include <doctest.h>

#include <cmath>

#include "supertrim/error.hpp"
#include "supertrim/semigroup.hpp"
#include "supertrim/stats.hpp"
#include "supertrim/superproc.hpp"

using namespace supertrim;

namespace {

MotionCtmc two_state() {
  Eigen::MatrixXd q(2, 2);
  q << -1.0, 1.0, 2.0, -2.0;
  return MotionCtmc(q);
}

SuperConfig config(std::uint32_t N, double T, std::vector<double> grid = {}) {
  SuperConfig c;
  c.N = N;
  c.T = T;
  c.time_grid = std::move(grid);
  return c;
}

}  // namespace

TEST_CASE("without branching the total mass is conserved") {
  const SuperSimulator sim(two_state(), Field{0.0, 0.0}, Field{0.0, 0.0}, Measure{0.4, 0.6}, config(100, 2.0, {1.0}));
  for (std::uint64_t r = 0; r < 20; ++r) {
    RngStream rng(1, r, Purpose::kDynamics);
    const auto traj = sim.run(rng);
    REQUIRE(traj.masses.size() == 3);
    CHECK(traj.total_mass_at(1) == doctest::Approx(traj.total_mass_at(0)).epsilon(1e-12));
    CHECK(traj.total_mass_at(2) == doctest::Approx(traj.total_mass_at(0)).epsilon(1e-12));
    const double count = traj.total_mass_at(0) * 100.0;
    CHECK(count == doctest::Approx(std::round(count)));
  }
}

TEST_CASE("split and death rates of the N-approximation") {
  const SuperSimulator sim(two_state(), Field{0.5, 0.2}, Field{0.3, -0.4}, Measure{0.1, 0.1}, config(200, 1.0));
  CHECK(sim.split_rate()[0] == doctest::Approx(200 * 0.5 + 0.3));
  CHECK(sim.death_rate()[0] == doctest::Approx(200 * 0.5));
  CHECK(sim.split_rate()[1] == doctest::Approx(200 * 0.2));
  CHECK(sim.death_rate()[1] == doctest::Approx(200 * 0.2 + 0.4));
}

TEST_CASE("mean mass follows the linear semigroup") {
  const auto m = two_state();
  const Field alpha{0.4, 0.6}, beta{0.5, -0.3};
  const Measure mu{0.3, 0.2};
  const SuperSimulator sim(m, alpha, beta, mu, config(200, 1.0));
  std::vector<double> totals;
  for (std::uint64_t r = 0; r < 3000; ++r) {
    RngStream rng(2, r, Purpose::kDynamics);
    totals.push_back(sim.run(rng).masses.back().total());
  }
  const double ref = mu.integrate(linear_moment(m, beta, Field{1.0, 1.0}, 1.0));
  const auto est = estimate_mean(totals);
  CHECK(std::abs(est.mean - ref) < 4.0 * est.se);
}

TEST_CASE("replicas are reproducible and independent of call order") {
  const SuperSimulator sim(two_state(), Field{0.4, 0.6}, Field{0.5, -0.3}, Measure{0.3, 0.2}, config(100, 1.0));
  RngStream a(3, 7, Purpose::kDynamics);
  RngStream other(3, 8, Purpose::kDynamics);
  RngStream b(3, 7, Purpose::kDynamics);
  const auto first = sim.run(a);
  sim.run(other);
  const auto second = sim.run(b);
  REQUIRE(first.masses.size() == second.masses.size());
  for (std::size_t k = 0; k < first.masses.size(); ++k) CHECK(first.masses[k].masses() == second.masses[k].masses());
  CHECK(first.levels.back().atoms == second.levels.back().atoms);
}

TEST_CASE("tail marks are nested and match their survival probabilities") {
  auto cfg = config(100, 0.5);
  cfg.tail_horizons = {2.0, 1.0};
  const auto m = two_state();
  const Field alpha{0.5, 0.5}, beta{0.3, -0.2};
  const SuperSimulator sim(m, alpha, beta, Measure{0.5, 0.5}, cfg);
  REQUIRE(sim.tail_survival().size() == 2);
  // Generating semigroup of the particle system from f = 1 over R - T.
  const auto direct = solve_generating(m, sim.split_rate(), sim.death_rate(), Field{1.0, 1.0}, 0.5);
  CHECK(sim.tail_survival()[0][0] == doctest::Approx(direct.value[0]).epsilon(1e-7));
  std::size_t marked = 0, atoms = 0;
  for (std::uint64_t r = 0; r < 200; ++r) {
    RngStream rng(4, r, Purpose::kDynamics);
    const auto traj = sim.run(rng);
    REQUIRE(traj.tail_horizons == std::vector<double>{1.0, 2.0});
    const auto& early = traj.tail_marks[0];
    const auto& late = traj.tail_marks[1];
    for (std::size_t i = 0; i < early.size(); ++i) {
      if (late[i]) CHECK(early[i]);
      marked += early[i];
    }
    atoms += early.size();
    const auto anc = ancestors(traj, 0.5, 2.0);
    CHECK(anc.size() <= traj.levels.back().atoms.size());
  }
  REQUIRE(atoms > 1000);
  const double p = 0.5 * (sim.tail_survival()[0][0] + sim.tail_survival()[0][1]);
  CHECK(marked > 0);
  CHECK(double(marked) / atoms < 3.0 * p);
}

TEST_CASE("ancestors are distinct time-t particles") {
  auto cfg = config(200, 1.0, {0.5});
  cfg.record_genealogy = true;
  const SuperSimulator sim(two_state(), Field{0.5, 0.5}, Field{0.3, 0.3}, Measure{0.3, 0.3}, cfg);
  for (std::uint64_t r = 0; r < 10; ++r) {
    RngStream rng(5, r, Purpose::kDynamics);
    const auto traj = sim.run(rng);
    const auto a0 = ancestors(traj, 0.0, 1.0);
    const auto a5 = ancestors(traj, 0.5, 1.0);
    CHECK(a0.size() <= a5.size());
    const auto sorted = a5.sorted();
    for (std::size_t i = 1; i < sorted.size(); ++i) CHECK(sorted[i - 1].id < sorted[i].id);
    // Every time-0.5 ancestor descends from a time-0 ancestor.
    for (const auto& a : sorted) CHECK(a0.contains(traj.genealogy->ancestor_at(a.id, 0.0)));
    // Off-grid times go through the genealogy.
    CHECK(traj.mass_at(0.75).total() >= 0.0);
  }
}

TEST_CASE("escape stops a replica early") {
  auto cfg = config(100, 20.0, {5.0, 10.0});
  cfg.escape_mass = 2.0;
  const SuperSimulator sim(MotionCtmc(Eigen::MatrixXd::Zero(1, 1)), Field{0.05}, Field{1.0}, Measure{1.0}, cfg);
  RngStream rng(6, 0, Purpose::kDynamics);
  const auto traj = sim.run(rng);
  CHECK(traj.escaped);
  CHECK(traj.masses.size() < traj.times.size());
  CHECK(traj.escape_time < 20.0);
}

TEST_CASE("square-root diffusion mean") {
  const MotionCtmc m(Eigen::MatrixXd::Zero(1, 1));
  std::vector<double> totals;
  for (std::uint64_t r = 0; r < 4000; ++r) {
    RngStream rng(7, r, Purpose::kDiffusion);
    const auto path = simulate_super_sde(m, Field{0.5}, Field{0.4}, Measure{1.0}, 0.01, 1.0, rng, {0.5, 1.0});
    REQUIRE(path.times == std::vector<double>{0.5, 1.0});
    CHECK(path.values.back().total() >= 0.0);
    totals.push_back(path.values.back().total());
  }
  const auto est = estimate_mean(totals);
  CHECK(std::abs(est.mean - std::exp(0.4)) < 4.0 * est.se);
}

TEST_CASE("reweight") {
  const auto x = reweight(Measure{1.0, 2.0}, Field{3.0, 0.5});
  CHECK(x[0] == 3.0);
  CHECK(x[1] == 1.0);
  CHECK_THROWS_AS(reweight(Measure{1.0}, Field{1.0, 2.0}), DomainError);
}
