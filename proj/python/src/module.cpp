#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "supertrim/error.hpp"
#include "supertrim/scenario.hpp"
#include "supertrim/semigroup.hpp"
#include "supertrim/stats.hpp"
#include "supertrim/superproc.hpp"

namespace py = pybind11;
using namespace supertrim;

namespace {

// Infinite components are returned as +inf.
Eigen::VectorXd with_infinities(const SemigroupResult& r) {
  Eigen::VectorXd v = r.value.values();
  for (std::size_t x = 0; x < r.infinite.size(); ++x) {
    if (r.infinite[x]) v[static_cast<Eigen::Index>(x)] = std::numeric_limits<double>::infinity();
  }
  return v;
}

py::dict report_dict(const CouplingReport& r) {
  py::list checks;
  for (const auto& c : r.checks) {
    py::dict d;
    d["name"] = c.name;
    d["statistic"] = c.statistic;
    d["p_value"] = c.p_value;
    d["threshold"] = c.threshold;
    d["rule"] = c.rule;
    d["passed"] = c.passed;
    d["seed"] = c.seed;
    d["replicas"] = c.replicas;
    d["note"] = c.note;
    checks.append(d);
  }
  py::dict out;
  out["scenario"] = r.scenario;
  out["passed"] = r.passed();
  out["checks"] = checks;
  out["text"] = r.to_text();
  return out;
}

}  // namespace

PYBIND11_MODULE(_supertrim, m) {
  m.doc() = "Superprocess semigroups, particle approximations and verification scenarios";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);
  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_RuntimeError);
  py::register_exception<CapExceeded>(m, "CapExceeded", PyExc_RuntimeError);

  m.def(
      "solve_loglaplace",
      [](const Eigen::MatrixXd& Q, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, const Eigen::VectorXd& f,
         double t) { return solve_loglaplace(MotionCtmc(Q), Field(alpha), Field(beta), Field(f), t).value.values(); },
      py::arg("Q"), py::arg("alpha"), py::arg("beta"), py::arg("f"), py::arg("t"));
  m.def(
      "solve_generating",
      [](const Eigen::MatrixXd& Q, const Eigen::VectorXd& b, const Eigen::VectorXd& d, const Eigen::VectorXd& f,
         double t) { return solve_generating(MotionCtmc(Q), Field(b), Field(d), Field(f), t).value.values(); },
      py::arg("Q"), py::arg("b"), py::arg("d"), py::arg("f"), py::arg("t"));
  m.def(
      "u_infinity",
      [](const Eigen::MatrixXd& Q, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, double t) {
        return with_infinities(u_infinity(MotionCtmc(Q), Field(alpha), Field(beta), t));
      },
      py::arg("Q"), py::arg("alpha"), py::arg("beta"), py::arg("t"));
  m.def(
      "survival_p",
      [](const Eigen::MatrixXd& Q, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta) {
        const auto s = survival_p(MotionCtmc(Q), Field(alpha), Field(beta));
        py::dict d;
        d["p"] = s.p.values();
        d["residual"] = s.residual;
        d["fixed_point_error"] = s.fixed_point_error;
        d["newton_iterations"] = s.newton_iterations;
        return d;
      },
      py::arg("Q"), py::arg("alpha"), py::arg("beta"));
  m.def(
      "linear_moment",
      [](const Eigen::MatrixXd& Q, const Eigen::VectorXd& beta, const Eigen::VectorXd& f, double t) {
        return linear_moment(MotionCtmc(Q), Field(beta), Field(f), t).values();
      },
      py::arg("Q"), py::arg("beta"), py::arg("f"), py::arg("t"));
  m.def(
      "gamma_from_h",
      [](const Eigen::MatrixXd& Q, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
         const Eigen::VectorXd& h) { return gamma_from_h(MotionCtmc(Q), Field(alpha), Field(beta), Field(h)).values(); },
      py::arg("Q"), py::arg("alpha"), py::arg("beta"), py::arg("h"));
  m.def(
      "h_transform", [](const Eigen::MatrixXd& Q, const Eigen::VectorXd& h) { return h_transform(MotionCtmc(Q), Field(h)).rates(); },
      py::arg("Q"), py::arg("h"));

  m.def(
      "simulate_super",
      [](const Eigen::MatrixXd& Q, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, const Eigen::VectorXd& mu,
         double T, std::uint32_t N, std::vector<double> times, std::uint64_t seed, std::uint64_t replica) {
        SuperConfig cfg;
        cfg.N = N;
        cfg.T = T;
        cfg.time_grid = times;
        cfg.record_ancestry = false;
        RngStream rng(seed, replica, Purpose::kDynamics);
        const auto traj = simulate_super(MotionCtmc(Q), Field(alpha), Field(beta), Measure(mu), cfg, rng);
        Eigen::MatrixXd X(static_cast<Eigen::Index>(traj.masses.size()), static_cast<Eigen::Index>(traj.num_states));
        for (std::size_t k = 0; k < traj.masses.size(); ++k) X.row(static_cast<Eigen::Index>(k)) = traj.masses[k].masses();
        py::dict d;
        d["times"] = traj.times;
        d["masses"] = X;
        return d;
      },
      py::arg("Q"), py::arg("alpha"), py::arg("beta"), py::arg("mu"), py::arg("T"), py::arg("N") = 500,
      py::arg("times") = std::vector<double>{}, py::arg("seed") = 1, py::arg("replica") = 0);

  m.def("scenario_names", &scenario_names);
  m.def(
      "run_scenario",
      [](const std::string& config_json) {
        const auto config = parse_config(config_json);
        CouplingReport report;
        {
          py::gil_scoped_release release;
          report = run_scenario(config);
        }
        auto d = report_dict(report);
        d["config_hash"] = hex64(config.hash);
        return d;
      },
      py::arg("config_json"), "Run a verification scenario from a JSON config string.");
}
