#include <doctest.h>

#include <fstream>
#include <sstream>

#include "supertrim/error.hpp"
#include "supertrim/scenario.hpp"

using namespace supertrim;

namespace {

const char* kBase = R"({
  "scenario": "theorem8-domination",
  "model": {"states": 2, "Q": [-1, 1, 1, -1], "alpha": [1, 1], "beta": [2, 0.5], "h": [2.5, 1.5], "mu": [1, 1]},
  "run": {"seed": 5, "T": 1.0},
  "output": {"dir": "a"}
})";

std::string field_of(const std::string& json) {
  try {
    parse_config(json);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config(kBase);
  CHECK(c.scenario == "theorem8-domination");
  CHECK(c.states == 2);
  CHECK(c.Q(0, 1) == 1.0);
  CHECK(c.h.has_value());
  CHECK(c.seed == 5);
  CHECK(c.out_dir == "a");
  CHECK(run_scenario(c).passed());
}

TEST_CASE("config errors name the key") {
  CHECK(field_of(R"({"scenario": "lemma12-bound", "run": {"seed": 1}, "extra": 1})") == "extra");
  CHECK(field_of(R"({"scenario": "lemma12-bound", "run": {"seeds": 1}})") == "run.seeds");
  CHECK(field_of(R"({"scenario": "lemma12-bound", "run": {}})") == "run.seed");
  CHECK(field_of(R"({"scenario": "x", "model": {"states": 2, "Q": [-1, 1, 1, -0.5], "alpha": [1, 1],
                     "beta": [1, 1], "mu": [1, 1]}, "run": {"seed": 1}})") == "model.Q[1]");
  CHECK(field_of(R"({"scenario": "x", "model": {"states": 2, "Q": [-1, 1, 1, -1], "alpha": [1],
                     "beta": [1, 1], "mu": [1, 1]}, "run": {"seed": 1}})") == "model.alpha");
  CHECK(field_of("{not json") == "<document>");
  auto unknown = parse_config(R"({"scenario": "nope", "run": {"seed": 1}})");
  CHECK_THROWS_AS(run_scenario(unknown), ConfigError);
  auto missing = parse_config(R"({"scenario": "theorem8-domination", "run": {"seed": 1}})");
  CHECK_THROWS_AS(run_scenario(missing), ConfigError);
}

TEST_CASE("config hash") {
  const auto a = parse_config(kBase);
  // Formatting, key order and the output block do not change the hash.
  const auto b = parse_config(R"({"run": {"T": 1, "seed": 5}, "output": {"dir": "elsewhere"},
    "model": {"mu": [1, 1], "h": [2.5, 1.5], "beta": [2, 0.5], "alpha": [1, 1], "Q": [-1, 1, 1, -1], "states": 2},
    "scenario": "theorem8-domination"})");
  CHECK(a.hash == b.hash);
  ConfigOverrides o;
  o.seed = 6;
  CHECK(parse_config(kBase, o).hash != a.hash);
  CHECK(parse_config(kBase, o).seed == 6);
  ConfigOverrides same;
  same.seed = 5;
  CHECK(parse_config(kBase, same).hash == a.hash);
  CHECK(hex64(a.hash).size() == 16);
  // FNV-1a reference values.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("shipped configs parse and name known scenarios") {
  const auto& names = scenario_names();
  for (const auto& name : names) {
    const auto c = load_config(std::string(SUPERTRIM_CONFIG_DIR) + "/" + name + ".json");
    CHECK(c.scenario == name);
  }
  CHECK_THROWS_AS(load_config(std::string(SUPERTRIM_CONFIG_DIR) + "/missing.json"), ConfigError);
}

TEST_CASE("algebraic scenarios are deterministic") {
  const auto c = load_config(std::string(SUPERTRIM_CONFIG_DIR) + "/weighted-identity.json");
  const auto a = run_scenario(c);
  const auto b = run_scenario(c);
  CHECK(a.passed());
  CHECK(a.to_text() == b.to_text());
  CHECK(a.to_text().find("# config_hash: " + hex64(c.hash)) != std::string::npos);
}
