#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "supertrim/error.hpp"
#include "supertrim/trim.hpp"

using namespace supertrim;

namespace {

MotionCtmc two_state() {
  Eigen::MatrixXd q(2, 2);
  q << -1.0, 1.0, 1.0, -1.0;
  return MotionCtmc(q);
}

}  // namespace

TEST_CASE("report formatting and verdict") {
  CouplingReport r;
  r.scenario = "demo";
  r.metadata = {{"seed", "3"}};
  r.add_value("residual", 1e-9, 1e-8, 3);
  r.add_flag("violations", 0, 3, 10);
  r.add_info("info", 42.0);
  CHECK(r.passed());
  const auto text = r.to_text();
  CHECK(text.rfind("# scenario: demo\n# seed: 3\nPASS  residual", 0) == 0);
  CHECK(text.find("# verdict: PASS\n") != std::string::npos);
  r.add_band("band", Estimate{1.0, 0.1, 10}, 2.0, 4.0, 3);
  CHECK_FALSE(r.passed());
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["passed"] == false);
  CHECK(j["checks"].size() == 4);
  CHECK(j["checks"][1]["p_value"].is_null());
  CHECK(j["checks"][3]["statistic"] == doctest::Approx(10.0));

  CouplingReport outer;
  outer.merge(r, "inner");
  CHECK(outer.checks.size() == 4);
  CHECK(outer.checks[0].name.rfind("inner", 0) == 0);
}

TEST_CASE("domination p <= h for admissible h") {
  const auto m = two_state();
  const auto r = verify_domination(m, Field{1.0, 1.0}, Field{2.0, 0.5}, Field{2.5, 1.5});
  CHECK(r.passed());
  CHECK_THROWS_AS(verify_domination(m, Field{1.0, 1.0}, Field{2.0, 0.5}, Field{1.0, 1.0}), PreconditionError);
}

TEST_CASE("trimmed margin reaches the surrogate criterion") {
  const auto m = two_state();
  const Field alpha{1.0, 1.0}, beta{2.0, 0.5};
  const auto s = survival_p(m, alpha, beta);
  const double tau = trimmed_margin(m, alpha, beta, s.p);
  CHECK(tau > 0.0);
  CHECK(tau < 50.0);
}

TEST_CASE("trimmed tree extraction is nested and non-decreasing in t") {
  SuperConfig cfg;
  cfg.N = 200;
  cfg.T = 1.0;
  cfg.time_grid = {0.25, 0.5};
  cfg.tail_horizons = {4.0};
  const auto m = two_state();
  const SuperSimulator sim(m, Field{0.5, 0.5}, Field{1.0, 0.25}, Measure{0.3, 0.3}, cfg);
  for (std::uint64_t r = 0; r < 20; ++r) {
    RngStream rng(8, r, Purpose::kDynamics);
    const auto traj = sim.run(rng);
    const auto tree = extract_trimmed_tree(traj, {0.0, 0.25, 0.5, 1.0}, 4.0);
    REQUIRE(tree.sets.size() == 4);
    CHECK(trimmed_tree_nested(traj, tree));
    for (std::size_t k = 1; k < tree.sets.size(); ++k) CHECK(tree.sets[k].size() >= tree.sets[k - 1].size());
  }
  RngStream rng(8, 0, Purpose::kDynamics);
  const auto traj = sim.run(rng);
  CHECK_THROWS_AS(extract_trimmed_tree(traj, {0.5, 1.0}, 4.0, 5.0), PreconditionError);
}

TEST_CASE("girsanov verifier on a small instance") {
  Eigen::MatrixXd q(3, 3);
  q << -1.5, 1.0, 0.5, 0.5, -1.0, 0.5, 1.0, 1.0, -2.0;
  const auto r = verify_girsanov(MotionCtmc(q), Field{1.0, 2.0, 0.5}, Field{1.0, -0.5, 2.0}, 1.0, 20000, 3);
  CHECK(r.passed());
}

TEST_CASE("verifier results do not depend on the thread count") {
  SuperModel model{two_state(), Field{0.5, 0.5}, Field{0.3, 0.1}, Measure{0.1, 0.1}};
  VerifyOptions one;
  one.replicas = 200;
  one.seed = 4;
  VerifyOptions two = one;
  two.threads = 2;
  const auto a = verify_embedding(model, Field{1.2, 0.9}, {0.5}, one);
  const auto b = verify_embedding(model, Field{1.2, 0.9}, {0.5}, two);
  CHECK(a.to_text() == b.to_text());
  CHECK(a.to_json() == b.to_json());
}
