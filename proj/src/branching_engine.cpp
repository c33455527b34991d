#include "branching_engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "supertrim/error.hpp"

namespace supertrim::detail {

BranchingEngine::BranchingEngine(const MotionCtmc& motion, Eigen::VectorXd split, Eigen::VectorXd death,
                                 RngStream& rng, IdSource& ids, const BranchingOptions& options)
    : n_(motion.size()), rng_(rng), ids_(ids), options_(options), buckets_(motion.size()) {
  require_same_size(n_, static_cast<std::size_t>(split.size()), "branching rates");
  require_same_size(n_, static_cast<std::size_t>(death.size()), "branching rates");
  if (split.minCoeff() < 0.0 || death.minCoeff() < 0.0 || !split.allFinite() || !death.allFinite()) {
    throw DomainError("branching rates must be finite and nonnegative");
  }
  jump_.assign(n_ * n_, 0.0);
  exit_.resize(n_);
  split_.resize(n_);
  per_particle_.resize(n_);
  for (std::size_t x = 0; x < n_; ++x) {
    for (std::size_t y = 0; y < n_; ++y) {
      if (y != x) jump_[x * n_ + y] = std::max(motion.rate(static_cast<StateIndex>(x), static_cast<StateIndex>(y)), 0.0);
    }
    const auto xi = static_cast<Eigen::Index>(x);
    exit_[x] = -motion.rates()(xi, xi);
    split_[x] = split[xi];
    per_particle_[x] = exit_[x] + split[xi] + death[xi];
  }
}

void BranchingEngine::population_cap() const {
  std::ostringstream os;
  os << "population exceeded the cap of " << options_.max_population << " particles";
  throw CapExceeded(os.str());
}

void BranchingEngine::event_cap() const {
  std::ostringstream os;
  os << "event budget of " << options_.max_events << " exhausted at t=" << time_;
  throw CapExceeded(os.str());
}

void BranchingEngine::add(StateIndex state, ParticleId id, ParticleId parent, std::uint32_t label) {
  if (state >= n_) throw DomainError("particle state outside the state space");
  buckets_[state].push_back({id, parent, label});
  if (++population_ > options_.max_population) population_cap();
}

PointMeasure BranchingEngine::snapshot() const {
  std::vector<Atom> atoms;
  atoms.reserve(population_);
  for (std::size_t x = 0; x < buckets_.size(); ++x) {
    for (const auto& p : buckets_[x]) atoms.push_back({static_cast<StateIndex>(x), p.id});
  }
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.id < b.id; });
  return PointMeasure(buckets_.size(), std::move(atoms));
}

AdvanceStatus BranchingEngine::advance_to(double t) {
  const std::size_t n = n_;
  const std::uint64_t max_events = options_.max_events > 0 ? options_.max_events : ~std::uint64_t{0};
  if (stop_population_ > 0 && population_ >= stop_population_) return AdvanceStatus::kStopped;
  while (true) {
    double total = 0.0;
    for (std::size_t x = 0; x < n; ++x) total += static_cast<double>(buckets_[x].size()) * per_particle_[x];
    if (total <= 0.0) break;
    const double next = time_ + rng_.exponential() / total;
    if (next > t) break;
    time_ = next;
    if (events_ >= max_events) event_cap();
    ++events_;

    // Locate the state, then the particle, then the clock that fired.
    double u = rng_.uniform() * total;
    std::size_t x = 0;
    for (std::size_t s = 0; s < n; ++s) {
      const double w = static_cast<double>(buckets_[s].size()) * per_particle_[s];
      if (w <= 0.0) continue;
      x = s;
      if (u < w) break;
      u -= w;
    }
    const double rate = per_particle_[x];
    auto& bucket = buckets_[x];
    const auto index = std::min(static_cast<std::size_t>(u / rate), bucket.size() - 1);
    double v = std::clamp(u - static_cast<double>(index) * rate, 0.0, rate);
    const Particle particle = bucket[index];
    const auto state = static_cast<StateIndex>(x);

    if (v < exit_[x]) {
      // Given the jump clock fired, v is uniform on [0, exit); reuse it for the target.
      const double* row = &jump_[x * n];
      std::size_t y = x;
      for (std::size_t z = 0; z < n; ++z) {
        if (row[z] <= 0.0) continue;
        y = z;
        if (v < row[z]) break;
        v -= row[z];
      }
      bucket[index] = bucket.back();
      bucket.pop_back();
      buckets_[y].push_back(particle);
      if (log_) log_->push_back({time_, EventKind::kJump, particle.id, particle.parent, static_cast<StateIndex>(y)});
    } else if (v - exit_[x] < split_[x]) {
      // The first child takes the parent's slot.
      const ParticleId first = ids_.take();
      const ParticleId second = ids_.take();
      bucket[index] = {first, particle.id, particle.label};
      bucket.push_back({second, particle.id, particle.label});
      if (++population_ > options_.max_population) population_cap();
      if (log_) {
        log_->push_back({time_, EventKind::kSplit, particle.id, particle.parent, state});
        log_->push_back({time_, EventKind::kBirth, first, particle.id, state});
        log_->push_back({time_, EventKind::kBirth, second, particle.id, state});
      }
      if (stop_population_ > 0 && population_ >= stop_population_) return AdvanceStatus::kStopped;
    } else {
      bucket[index] = bucket.back();
      bucket.pop_back();
      --population_;
      if (log_) log_->push_back({time_, EventKind::kDeath, particle.id, particle.parent, state});
    }
  }
  time_ = std::max(time_, t);
  return AdvanceStatus::kReached;
}

}  // namespace supertrim::detail
