// Acceptance suite: one PASS/FAIL line per criterion. Statistical criteria
// run the shipped scenario configs; the rest compute their checks inline.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "supertrim/error.hpp"
#include "supertrim/rng.hpp"
#include "supertrim/scenario.hpp"
#include "supertrim/semigroup.hpp"
#include "supertrim/stats.hpp"

using namespace supertrim;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;
};

std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

ScenarioConfig config(const std::string& name, const ConfigOverrides& o = {}) {
  return load_config(std::string(SUPERTRIM_CONFIG_DIR) + "/" + name + ".json", o);
}

// Runs the named configs; the failing checks are listed in the detail.
Outcome scenarios(const std::vector<std::string>& names) {
  Outcome out;
  std::size_t checks = 0;
  for (const auto& name : names) {
    const auto report = run_scenario(config(name));
    checks += report.checks.size();
    for (const auto& c : report.checks) {
      if (!c.passed) {
        out.passed = false;
        out.detail += " [" + name + ": " + c.name + " statistic=" + format_g(c.statistic) + "]";
      }
    }
  }
  out.detail = std::to_string(names.size()) + " config(s), " + std::to_string(checks) + " checks" + out.detail;
  return out;
}

Outcome closed_form() {
  const MotionCtmc single(Eigen::MatrixXd::Zero(1, 1));
  double worst = 0.0;
  for (double a : {0.5, 1.0, 2.0}) {
    for (double t : {0.1, 1.0, 10.0}) {
      for (double b : {0.5, 1.0, 2.0}) {
        const auto u = u_infinity(single, Field{a}, Field{b}, t);
        const double ref = b / (a * (1.0 - std::exp(-b * t)));
        worst = std::max(worst, u.any_infinite() ? HUGE_VAL : std::abs(u.value[0] / ref - 1.0));
      }
      const auto u = u_infinity(single, Field{a}, Field{0.0}, t);
      worst = std::max(worst, u.any_infinite() ? HUGE_VAL : std::abs(u.value[0] * a * t - 1.0));
    }
  }
  return {worst <= 1e-6, "max relative error " + format_g(worst) + " (tolerance 1e-6)"};
}

std::vector<std::int64_t> poisson_draws(RngStream& rng, double mean, int n) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(n));
  for (auto& v : out) v = rng.poisson(mean);
  return out;
}

// Null rejection rate of every level-0.01 test over synthetic repetitions.
Outcome calibration() {
  const int reps = 1000;
  struct Rate {
    const char* name;
    int rejected = 0;
  };
  std::vector<Rate> rates = {{"poisson_gof"},         {"two_sample_histogram"}, {"two_sample_counts"},
                             {"two_proportion_test"}, {"independence_test"},    {"z_test"}};
  for (int r = 0; r < reps; ++r) {
    RngStream rng(424242, static_cast<std::uint64_t>(r), Purpose::kSynthetic);
    rates[0].rejected += !poisson_gof(poisson_draws(rng, 1.3, 1000), 1.3).passed;
    rates[1].rejected += !two_sample_histogram("h", poisson_draws(rng, 4.0, 500), poisson_draws(rng, 4.0, 500)).passed;
    std::vector<PointMeasure> a, b;
    IdSource ids;
    const Measure mu{0.8, 2.0};
    for (int i = 0; i < 300; ++i) {
      a.push_back(pois_sample(mu, rng, ids));
      b.push_back(pois_sample(mu, rng, ids));
    }
    rates[2].rejected += !two_sample_counts(a, b).passed;
    rates[3].rejected += !two_proportion_test("p", static_cast<std::size_t>(rng.binomial(1000, 0.2)), 1000,
                                              static_cast<std::size_t>(rng.binomial(800, 0.2)), 800)
                              .passed;
    std::vector<double> x(500), y(500), s(500);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.exponential();
      y[i] = rng.normal();
      s[i] = rng.exponential();
    }
    rates[4].rejected += !independence_test("i", x, y).passed;
    rates[5].rejected += !z_test("z", estimate_mean(s), 1.0).passed;
  }
  Outcome out;
  for (const auto& rate : rates) {
    const double f = rate.rejected / double(reps);
    out.passed = out.passed && f >= 0.002 && f <= 0.03;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s%s=%.3f", out.detail.empty() ? "" : " ", rate.name, f);
    out.detail += buf;
  }
  out.detail += " (allowed [0.002, 0.03])";
  return out;
}

Outcome determinism() {
  Outcome out;
  int compared = 0;
  auto same = [&](const std::string& name, const ConfigOverrides& o, unsigned threads_b) {
    auto a = config(name, o);
    auto b = config(name, o);
    b.threads = threads_b;
    const auto ra = run_scenario(a);
    const auto rb = run_scenario(b);
    ++compared;
    if (ra.to_text() != rb.to_text() || ra.to_json() != rb.to_json()) {
      out.passed = false;
      out.detail += " [" + name + " differs]";
    }
  };
  ConfigOverrides small;
  small.replicas = 300;
  same("prop7-fixed-point", {}, 1);
  same("lemma12-bound", {}, 1);
  same("lemma1-poissonization", small, 1);
  same("corollary37-ancestors", small, 2);
  same("theorem9-trimmed-tree", small, 2);
  out.detail = std::to_string(compared) + " scenario pairs compared byte for byte (text and JSON)" + out.detail;
  return out;
}

struct Criterion {
  const char* id;
  const char* title;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"AC1", "single-site U_t(inf) closed form", 1.0, closed_form},
      {"AC2", "extinction bound on 100 random instances", 10.0, [] { return scenarios({"lemma12-bound"}); }},
      {"AC3", "survival fixed point, Newton vs long-time flow", 10.0, [] { return scenarios({"prop7-fixed-point"}); }},
      {"AC4", "weighted identity on 20 tuples", 10.0, [] { return scenarios({"weighted-identity"}); }},
      {"AC5", "compensated h-transform and path reweighting", 30.0,
       [] { return scenarios({"girsanov-htransform"}); }},
      {"AC6", "first and second moments on 3 instances", 120.0,
       [] { return scenarios({"moments-check", "moments-check-single", "moments-check-3state"}); }},
      {"AC7", "Poissonization on 2 instances", 120.0,
       [] { return scenarios({"lemma1-poissonization", "lemma1-poissonization-3state"}); }},
      {"AC8", "ancestor counts are Poisson", 120.0, [] { return scenarios({"corollary37-ancestors"}); }},
      {"AC9", "particle embedding, h = 1 and nontrivial h", 180.0,
       [] { return scenarios({"theorem6-embedding-critical", "theorem6-embedding"}); }},
      {"AC10", "trimmed tree, single site and 2 states", 300.0,
       [] { return scenarios({"theorem9-trimmed-tree", "theorem9-trimmed-tree-2state"}); }},
      {"AC11", "deterministic-flow survival", 10.0, [] { return scenarios({"example32-flow"}); }},
      {"AC12", "small-mass dichotomy", 120.0, [] { return scenarios({"lemma31-dichotomy"}); }},
      {"AC13", "null rejection rates of all tests", 60.0, calibration},
      {"AC14", "byte-identical reruns", 0.0, determinism},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.budget_s <= 0.0 || secs <= c.budget_s;
    const bool ok = out.passed && in_time;
    failed += !ok;
    char timing[64];
    if (c.budget_s > 0.0) {
      std::snprintf(timing, sizeof timing, "%.1fs of %.0fs", secs, c.budget_s);
    } else {
      std::snprintf(timing, sizeof timing, "%.1fs", secs);
    }
    std::printf("%s  %-4s %s: %s [%s%s]\n", ok ? "PASS" : "FAIL", c.id, c.title, out.detail.c_str(), timing,
                in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
