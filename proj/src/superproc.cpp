#include "supertrim/superproc.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "branching_engine.hpp"
#include "supertrim/error.hpp"
#include "supertrim/semigroup.hpp"

namespace supertrim {

namespace {

bool same_time(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }

std::vector<double> observation_times(const SuperConfig& cfg) {
  std::vector<double> times{0.0, cfg.T};
  for (double t : cfg.time_grid) {
    if (!(t >= 0.0) || t > cfg.T) throw DomainError("simulate_super: grid time outside [0, T]");
    times.push_back(t);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end(), same_time), times.end());
  return times;
}

// Distinct level-i indices that are ancestors of `members` of level j >= i.
std::vector<std::uint32_t> project_down(const std::vector<AncestryLevel>& levels, std::size_t j,
                                        std::vector<std::uint32_t> members, std::size_t i) {
  for (std::size_t m = j; m > i; --m) {
    std::vector<char> seen(levels[m - 1].atoms.size(), 0);
    std::vector<std::uint32_t> up;
    for (auto k : members) {
      const auto p = levels[m].parent[k];
      if (!seen[p]) {
        seen[p] = 1;
        up.push_back(p);
      }
    }
    members = std::move(up);
  }
  return members;
}

PointMeasure level_subset(const AncestryLevel& level, std::size_t num_states,
                          const std::vector<std::uint32_t>& members) {
  std::vector<Atom> atoms;
  atoms.reserve(members.size());
  for (auto k : members) atoms.push_back(level.atoms[k]);
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.id < b.id; });
  return PointMeasure(num_states, std::move(atoms));
}

}  // namespace

int SuperTrajectory::time_index(double t) const {
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (same_time(times[k], t)) return static_cast<int>(k);
  }
  return -1;
}

Measure SuperTrajectory::mass_at(double t) const {
  const int k = time_index(t);
  if (k >= 0 && observed(static_cast<std::size_t>(k))) return masses[static_cast<std::size_t>(k)];
  if (genealogy && t >= 0.0 && t <= genealogy->horizon()) {
    const auto counts = alive_at(*genealogy, t).counts();
    Eigen::VectorXd m(static_cast<Eigen::Index>(counts.size()));
    for (std::size_t x = 0; x < counts.size(); ++x) m[static_cast<Eigen::Index>(x)] = double(counts[x]) / N;
    return Measure(std::move(m));
  }
  throw DomainError("mass_at: time not observed in this trajectory");
}

SuperSimulator::SuperSimulator(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Measure& mu,
                               SuperConfig config)
    : motion_(motion), mu_(mu), config_(std::move(config)) {
  require_same_size(motion.size(), alpha.size(), "simulate_super");
  require_same_size(motion.size(), beta.size(), "simulate_super");
  require_same_size(motion.size(), mu.size(), "simulate_super");
  if (alpha.min() < 0.0) throw DomainError("simulate_super: alpha must be nonnegative");
  if (config_.N < 1) throw DomainError("simulate_super: N must be >= 1");
  if (!(config_.T >= 0.0) || !std::isfinite(config_.T)) throw DomainError("simulate_super: T must be finite and >= 0");
  if (config_.escape_mass < 0.0) throw DomainError("simulate_super: escape mass must be >= 0");
  times_ = observation_times(config_);

  const double n = config_.N;
  const Eigen::VectorXd& a = alpha.values();
  const Eigen::VectorXd& b = beta.values();
  split_ = Field(Eigen::VectorXd(n * a + b.cwiseMax(0.0)));
  death_ = Field(Eigen::VectorXd(n * a + (-b).cwiseMax(0.0)));

  std::sort(config_.tail_horizons.begin(), config_.tail_horizons.end());
  for (double r : config_.tail_horizons) {
    if (!(r > config_.T) || !std::isfinite(r)) throw DomainError("simulate_super: tail horizons must be finite and > T");
    // 1 - P_x[no descendants after s] is the generating semigroup applied to f = 1.
    tail_survival_.push_back(
        solve_generating(motion_, split_, death_, Field::constant(motion.size(), 1.0), r - config_.T).value);
  }
}

SuperTrajectory SuperSimulator::run(RngStream& rng) const {
  const auto n_states = motion_.size();
  SuperTrajectory traj;
  traj.num_states = n_states;
  traj.N = config_.N;
  traj.horizon = config_.T;
  traj.times = times_;
  traj.tail_horizons = config_.tail_horizons;

  IdSource ids;
  std::vector<Atom> founders;
  for (std::size_t x = 0; x < n_states; ++x) {
    const auto k = rng.poisson(config_.N * mu_[x]);
    for (std::int64_t i = 0; i < k; ++i) founders.push_back({static_cast<StateIndex>(x), ids.take()});
  }
  PointMeasure initial(n_states, founders);

  std::vector<GenealogyEvent> log;
  detail::BranchingEngine engine(motion_, split_.values(), death_.values(), rng, ids, config_.limits);
  if (config_.record_genealogy) engine.set_log(&log);
  if (config_.escape_mass > 0.0) {
    engine.set_stop_population(static_cast<std::size_t>(std::ceil(config_.escape_mass * config_.N)));
  }
  for (const auto& a : founders) engine.add(a.state, a.id);

  const double unit = 1.0 / config_.N;
  for (std::size_t k = 0; k < times_.size(); ++k) {
    if (engine.advance_to(times_[k]) == detail::AdvanceStatus::kStopped) {
      traj.escaped = true;
      traj.escape_time = engine.time();
      break;
    }
    auto& buckets = engine.buckets();
    Eigen::VectorXd m(static_cast<Eigen::Index>(n_states));
    for (std::size_t x = 0; x < n_states; ++x) m[static_cast<Eigen::Index>(x)] = unit * double(buckets[x].size());
    traj.masses.emplace_back(std::move(m));

    if (config_.record_ancestry) {
      AncestryLevel level;
      level.time = times_[k];
      level.atoms.reserve(engine.population());
      level.parent.reserve(engine.population());
      std::uint32_t index = 0;
      for (std::size_t x = 0; x < n_states; ++x) {
        for (auto& p : buckets[x]) {
          level.atoms.push_back({static_cast<StateIndex>(x), p.id});
          level.parent.push_back(k == 0 ? 0 : p.label);
          p.label = index++;
        }
      }
      traj.levels.push_back(std::move(level));
    }
  }

  if (config_.record_genealogy) {
    traj.genealogy.emplace(std::move(initial), std::move(log), traj.escaped ? traj.escape_time : config_.T);
  }
  if (!traj.tail_horizons.empty() && !traj.escaped && config_.record_ancestry) {
    const auto& last = traj.levels.back();
    const auto h = traj.tail_horizons.size();
    traj.tail_marks.assign(h, std::vector<bool>(last.atoms.size(), false));
    for (std::size_t i = 0; i < last.atoms.size(); ++i) {
      const auto x = last.atoms[i].state;
      // Farthest horizon first; a nearer horizon is reached for sure when a
      // farther one is, otherwise with the conditional probability.
      bool later = false;
      double q_later = 0.0;
      for (std::size_t j = h; j-- > 0;) {
        const double q = tail_survival_[j][x];
        bool mark = later;
        if (!later) {
          const double cond = q_later < 1.0 ? (q - q_later) / (1.0 - q_later) : 0.0;
          mark = cond >= 1.0 || (cond > 0.0 && rng.uniform() < cond);
        }
        traj.tail_marks[j][i] = mark;
        later = mark;
        q_later = q;
      }
    }
  }
  return traj;
}

SuperTrajectory simulate_super(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Measure& mu,
                               const SuperConfig& config, RngStream& rng) {
  return SuperSimulator(motion, alpha, beta, mu, config).run(rng);
}

MeasurePath simulate_super_sde(const MotionCtmc& motion, const Field& alpha, const Field& beta, const Measure& mu,
                               double dt, double T, RngStream& rng, std::vector<double> record_times) {
  require_same_size(motion.size(), alpha.size(), "simulate_super_sde");
  require_same_size(motion.size(), beta.size(), "simulate_super_sde");
  require_same_size(motion.size(), mu.size(), "simulate_super_sde");
  if (!(dt > 0.0)) throw DomainError("simulate_super_sde: dt must be positive");
  if (!(T >= 0.0) || !std::isfinite(T)) throw DomainError("simulate_super_sde: T must be finite and >= 0");
  if (alpha.min() < 0.0) throw DomainError("simulate_super_sde: alpha must be nonnegative");
  if (record_times.empty()) record_times.push_back(T);
  std::sort(record_times.begin(), record_times.end());
  if (record_times.front() < 0.0 || record_times.back() > T) {
    throw DomainError("simulate_super_sde: record time outside [0, T]");
  }

  const Eigen::MatrixXd qt = motion.rates().transpose();
  const Eigen::VectorXd& a = alpha.values();
  const Eigen::VectorXd& b = beta.values();
  Eigen::VectorXd x = mu.masses();
  MeasurePath path;
  double t = 0.0;
  for (double target : record_times) {
    while (t < target && !same_time(t, target)) {
      const double h = std::min(dt, target - t);
      const Eigen::VectorXd xp = x.cwiseMax(0.0);
      Eigen::VectorXd next = x + h * (qt * xp + b.cwiseProduct(xp));
      const double sq = std::sqrt(h);
      for (Eigen::Index i = 0; i < x.size(); ++i) next[i] += std::sqrt(2.0 * a[i] * xp[i]) * sq * rng.normal();
      x = std::move(next);
      t += h;
    }
    t = std::max(t, target);
    path.times.push_back(target);
    path.values.emplace_back(Eigen::VectorXd(x.cwiseMax(0.0)));
  }
  return path;
}

Measure reweight(const Measure& X, const Field& h) {
  require_same_size(X.size(), h.size(), "reweight");
  if (!h.all_positive()) throw DomainError("reweight requires h > 0");
  return Measure(Eigen::VectorXd(X.masses().cwiseProduct(h.values())));
}

PointMeasure ancestors(const SuperTrajectory& traj, double t, double r) {
  if (!(t >= 0.0) || !(r >= t)) throw DomainError("ancestors requires 0 <= t <= r");
  const std::size_t n_states = traj.num_states;
  const int i = traj.time_index(t);
  const bool have_levels = !traj.levels.empty();

  if (have_levels && i >= 0 && static_cast<std::size_t>(i) < traj.levels.size()) {
    const auto ii = static_cast<std::size_t>(i);
    const auto tail = std::find_if(traj.tail_horizons.begin(), traj.tail_horizons.end(),
                                   [r](double h) { return same_time(r, h); });
    if (tail != traj.tail_horizons.end()) {
      if (traj.escaped) throw DomainError("ancestors: replica stopped early, tail horizon not reached");
      const auto& marks = traj.tail_marks[static_cast<std::size_t>(tail - traj.tail_horizons.begin())];
      std::vector<std::uint32_t> marked;
      for (std::size_t k = 0; k < marks.size(); ++k) {
        if (marks[k]) marked.push_back(static_cast<std::uint32_t>(k));
      }
      const auto last = traj.levels.size() - 1;
      return level_subset(traj.levels[ii], n_states, project_down(traj.levels, last, std::move(marked), ii));
    }
    const int j = traj.time_index(r);
    if (j >= 0 && static_cast<std::size_t>(j) < traj.levels.size()) {
      const auto jj = static_cast<std::size_t>(j);
      std::vector<std::uint32_t> all(traj.levels[jj].atoms.size());
      for (std::size_t k = 0; k < all.size(); ++k) all[k] = static_cast<std::uint32_t>(k);
      return level_subset(traj.levels[ii], n_states, project_down(traj.levels, jj, std::move(all), ii));
    }
  }

  if (traj.genealogy && r <= traj.genealogy->horizon()) {
    const auto& g = *traj.genealogy;
    std::vector<Atom> atoms;
    std::vector<ParticleId> seen;
    const auto alive = alive_at(g, r);
    for (const auto& a : alive.atoms()) seen.push_back(g.ancestor_at(a.id, t));
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (ParticleId id : seen) atoms.push_back({g.state_at(id, t), id});
    return PointMeasure(g.num_states(), std::move(atoms));
  }
  std::ostringstream os;
  os << "ancestors: (t=" << t << ", r=" << r << ") not covered by the recorded grid, tail marks or genealogy";
  throw DomainError(os.str());
}

}  // namespace supertrim
