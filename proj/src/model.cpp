#include "supertrim/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "supertrim/error.hpp"

namespace supertrim {

namespace {

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void require_same_size(std::size_t expected, std::size_t actual, const char* what) {
  if (expected != actual) {
    std::ostringstream os;
    os << what << ": dimension mismatch (expected " << expected << ", got " << actual << ")";
    throw DomainError(os.str());
  }
}

// ---------------------------------------------------------------------------
// StateSpace

StateSpace::StateSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw DomainError("state space must contain at least one state");
  std::unordered_set<std::string> seen;
  for (const auto& l : labels_) {
    if (!seen.insert(l).second) throw DomainError("duplicate state label '" + l + "'");
  }
}

StateSpace StateSpace::indexed(std::size_t n) {
  std::vector<std::string> labels;
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) labels.push_back(std::to_string(i));
  return StateSpace(std::move(labels));
}

StateIndex StateSpace::index_of(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw DomainError("unknown state label '" + label + "'");
  return static_cast<StateIndex>(it - labels_.begin());
}

// ---------------------------------------------------------------------------
// Field / Measure

Field::Field(Eigen::VectorXd values) : values_(std::move(values)) {
  if (!values_.allFinite()) throw DomainError("field entries must be finite");
}

Field::Field(std::vector<double> values) : Field(to_eigen(values)) {}

Field::Field(std::initializer_list<double> values) : Field(std::vector<double>(values)) {}

Field Field::constant(std::size_t n, double c) {
  return Field(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), c));
}

std::vector<double> Field::to_vector() const { return {values_.data(), values_.data() + values_.size()}; }

double Field::min() const { return values_.size() ? values_.minCoeff() : 0.0; }
double Field::max() const { return values_.size() ? values_.maxCoeff() : 0.0; }

Measure::Measure(Eigen::VectorXd masses) : masses_(std::move(masses)) {
  for (Eigen::Index i = 0; i < masses_.size(); ++i) {
    if (!std::isfinite(masses_[i]) || masses_[i] < 0.0) {
      std::ostringstream os;
      os << "measure mass at state " << i << " must be finite and nonnegative, got " << masses_[i];
      throw DomainError(os.str());
    }
  }
}

Measure::Measure(std::vector<double> masses) : Measure(to_eigen(masses)) {}

Measure::Measure(std::initializer_list<double> masses) : Measure(std::vector<double>(masses)) {}

Measure Measure::dirac(std::size_t n, std::size_t x, double mass) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  m[static_cast<Eigen::Index>(x)] = mass;
  return Measure(std::move(m));
}

double Measure::integrate(const Field& f) const {
  require_same_size(size(), f.size(), "Measure::integrate");
  return masses_.dot(f.values());
}

// ---------------------------------------------------------------------------
// PointMeasure

PointMeasure::PointMeasure(std::size_t num_states, std::vector<Atom> atoms)
    : num_states_(num_states), atoms_(std::move(atoms)) {
  std::unordered_set<ParticleId> ids;
  ids.reserve(atoms_.size());
  for (const auto& a : atoms_) {
    if (a.state >= num_states_) throw DomainError("point measure atom outside the state space");
    if (!ids.insert(a.id).second) throw DomainError("point measure ids must be pairwise distinct");
  }
}

std::vector<std::int64_t> PointMeasure::counts() const {
  std::vector<std::int64_t> c(num_states_, 0);
  for (const auto& a : atoms_) ++c[a.state];
  return c;
}

std::int64_t PointMeasure::count_in(std::span<const StateIndex> subset) const {
  std::int64_t n = 0;
  for (const auto& a : atoms_) {
    if (std::find(subset.begin(), subset.end(), a.state) != subset.end()) ++n;
  }
  return n;
}

bool PointMeasure::contains(ParticleId id) const {
  return std::any_of(atoms_.begin(), atoms_.end(), [id](const Atom& a) { return a.id == id; });
}

std::vector<Atom> PointMeasure::sorted() const {
  auto s = atoms_;
  std::sort(s.begin(), s.end(), [](const Atom& a, const Atom& b) { return a.id < b.id; });
  return s;
}

// ---------------------------------------------------------------------------
// Motions

MotionCtmc::MotionCtmc(Eigen::MatrixXd rates, double row_sum_tolerance) : rates_(std::move(rates)) {
  if (rates_.rows() == 0 || rates_.rows() != rates_.cols()) {
    throw DomainError("rate matrix must be square and nonempty");
  }
  for (Eigen::Index x = 0; x < rates_.rows(); ++x) {
    double sum = 0.0;
    double scale = 1.0;
    for (Eigen::Index y = 0; y < rates_.cols(); ++y) {
      const double q = rates_(x, y);
      if (!std::isfinite(q)) throw DomainError("rate matrix row " + std::to_string(x) + " has a non-finite entry");
      if (x != y && q < 0.0) {
        throw DomainError("rate matrix row " + std::to_string(x) + " has a negative off-diagonal rate");
      }
      sum += q;
      scale = std::max(scale, std::abs(q));
    }
    if (std::abs(sum) > row_sum_tolerance * scale) {
      std::ostringstream os;
      os << "rate matrix row " << x << " sums to " << sum << ", expected 0";
      throw DomainError(os.str());
    }
  }
}

MotionCtmc MotionCtmc::from_rows(std::size_t n, std::span<const double> row_major, double row_sum_tolerance) {
  if (row_major.size() != n * n) {
    std::ostringstream os;
    os << "rate matrix needs " << n * n << " entries for " << n << " states, got " << row_major.size();
    throw DomainError(os.str());
  }
  Eigen::MatrixXd q(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row_major[i * n + j];
    }
  }
  return MotionCtmc(std::move(q), row_sum_tolerance);
}

MotionFlow1D::MotionFlow1D(std::function<double(double)> velocity, double lower, double upper, double tolerance)
    : velocity_(std::move(velocity)), lower_(lower), upper_(upper), tolerance_(tolerance) {
  if (!velocity_) throw DomainError("flow velocity must be callable");
  if (!(lower_ < upper_)) throw DomainError("flow interval must be nondegenerate");
  if (!(tolerance_ > 0.0)) throw DomainError("flow tolerance must be positive");
}

// ---------------------------------------------------------------------------
// JumpPath

StateIndex JumpPath::state_at(double t) const {
  StateIndex s = start;
  for (const auto& j : jumps) {
    if (j.time > t) break;
    s = j.state;
  }
  return s;
}

void JumpPath::validate(std::size_t num_states) const {
  if (start >= num_states) throw DomainError("path start state outside the state space");
  double prev = 0.0;
  for (const auto& j : jumps) {
    if (!(j.time > prev) || j.time > horizon) throw DomainError("path jump times must increase strictly within (0, T]");
    if (j.state >= num_states) throw DomainError("path visits a state outside the state space");
    prev = j.time;
  }
}

// ---------------------------------------------------------------------------
// Operations

Field apply_generator(const MotionCtmc& motion, const Field& f) {
  require_same_size(motion.size(), f.size(), "apply_generator");
  return Field(Eigen::VectorXd(motion.rates() * f.values()));
}

MotionCtmc h_transform(const MotionCtmc& motion, const Field& h) {
  require_same_size(motion.size(), h.size(), "h_transform");
  if (!h.all_positive()) throw DomainError("h_transform requires h > 0 everywhere");
  const auto n = static_cast<Eigen::Index>(motion.size());
  const auto& q = motion.rates();
  Eigen::MatrixXd qh = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index x = 0; x < n; ++x) {
    double out = 0.0;
    for (Eigen::Index y = 0; y < n; ++y) {
      if (x == y) continue;
      qh(x, y) = q(x, y) * h[static_cast<std::size_t>(y)] / h[static_cast<std::size_t>(x)];
      out += qh(x, y);
    }
    qh(x, x) = -out;
  }
  return MotionCtmc(std::move(qh));
}

double girsanov_weight(const MotionCtmc& motion, const Field& h, const JumpPath& path) {
  require_same_size(motion.size(), h.size(), "girsanov_weight");
  if (!h.all_positive()) throw DomainError("girsanov_weight requires h > 0 everywhere");
  path.validate(motion.size());
  const Eigen::VectorXd killing = (motion.rates() * h.values()).cwiseQuotient(h.values());
  double integral = 0.0;
  double t = 0.0;
  StateIndex s = path.start;
  for (const auto& j : path.jumps) {
    integral += killing[s] * (j.time - t);
    t = j.time;
    s = j.state;
  }
  integral += killing[s] * (path.horizon - t);
  return h[path.end_state()] / h[path.start] * std::exp(-integral);
}

PointMeasure pois_sample(const Measure& mu, RngStream& rng, IdSource& ids) {
  std::vector<Atom> atoms;
  for (std::size_t x = 0; x < mu.size(); ++x) {
    const auto k = rng.poisson(mu[x]);
    for (std::int64_t i = 0; i < k; ++i) atoms.push_back({static_cast<StateIndex>(x), ids.take()});
  }
  return PointMeasure(mu.size(), std::move(atoms));
}

PointMeasure thin(const PointMeasure& nu, const Field& f, RngStream& rng) {
  require_same_size(nu.num_states(), f.size(), "thin");
  if (!f.within(0.0, 1.0)) throw DomainError("thinning probabilities must lie in [0, 1]");
  std::vector<Atom> kept;
  kept.reserve(nu.size());
  for (const auto& a : nu.atoms()) {
    const double keep = f[a.state];
    if (keep >= 1.0 || (keep > 0.0 && rng.uniform() < keep)) kept.push_back(a);
  }
  return PointMeasure(nu.num_states(), std::move(kept));
}

JumpPath sample_ctmc_path(const MotionCtmc& motion, StateIndex x, double horizon, RngStream& rng) {
  if (!(horizon >= 0.0)) throw DomainError("path horizon must be nonnegative");
  if (x >= motion.size()) throw DomainError("path start state outside the state space");
  JumpPath path{x, {}, horizon};
  double t = 0.0;
  StateIndex s = x;
  while (true) {
    const double rate = motion.exit_rate(s);
    if (rate <= 0.0) break;
    t += rng.exponential() / rate;
    if (t > horizon) break;
    double u = rng.uniform() * rate;
    StateIndex next = s;
    for (std::size_t y = 0; y < motion.size(); ++y) {
      if (y == s) continue;
      const double q = motion.rate(s, y);
      if (q <= 0.0) continue;
      next = static_cast<StateIndex>(y);
      if (u < q) break;
      u -= q;
    }
    s = next;
    path.jumps.push_back({t, s});
  }
  return path;
}

}  // namespace supertrim
