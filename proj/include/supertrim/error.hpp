#pragma once

#include <stdexcept>
#include <string>

namespace supertrim {

/// Invalid argument: shape mismatch, negative mass, out-of-range field, bad time.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed to reach its tolerance (ODE step budget,
/// Newton divergence, quadrature non-convergence, fixed-point check).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The population of a simulated system grew beyond its configured cap.
class CapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A verifier's mathematical precondition does not hold for the given model,
/// e.g. a weight h whose gamma is negative somewhere.
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent scenario configuration. `field` names the
/// offending key path (e.g. "model.Q[1]").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace supertrim
