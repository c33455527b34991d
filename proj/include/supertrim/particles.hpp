#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "supertrim/model.hpp"

namespace supertrim {

enum class EventKind : std::uint8_t { kBirth, kJump, kSplit, kDeath };

const char* to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& s);

/// One record of the event log. `parent` is the parent of `id` (0 for
/// founders). A split of particle i is logged as a split record for i
/// followed by two birth records whose parent is i.
struct GenealogyEvent {
  double time = 0.0;
  EventKind kind = EventKind::kBirth;
  ParticleId id = 0;
  ParticleId parent = 0;
  StateIndex state = 0;
  friend bool operator==(const GenealogyEvent&, const GenealogyEvent&) = default;
};

/// Append-only history of a binary branching particle system on [0, horizon].
class Genealogy {
 public:
  /// Life of a single particle, derived from the log.
  struct Lifeline {
    ParticleId parent = 0;
    double birth = 0.0;
    /// Time of the split or death ending this particle; +inf if alive at the horizon.
    double end = 0.0;
    StateIndex birth_state = 0;
    bool split = false;
    /// Indices into events() of this particle's jumps.
    std::vector<std::size_t> jumps;
  };

  Genealogy() = default;
  /// Validates the log against the initial configuration and indexes it.
  /// Throws DomainError on inconsistencies (unknown ids, reused ids,
  /// decreasing times, malformed splits, events beyond the horizon).
  Genealogy(PointMeasure initial, std::vector<GenealogyEvent> events, double horizon);

  const PointMeasure& initial() const { return initial_; }
  const std::vector<GenealogyEvent>& events() const { return events_; }
  double horizon() const { return horizon_; }
  std::size_t num_states() const { return initial_.num_states(); }
  std::size_t num_particles() const { return index_.size(); }

  /// Throws DomainError for unknown ids.
  const Lifeline& lifeline(ParticleId id) const;
  /// State of `id` at time t, which must lie in [birth, end).
  StateIndex state_at(ParticleId id, double t) const;
  /// The ancestor of `id` (possibly `id` itself) alive at time t <= end(id).
  ParticleId ancestor_at(ParticleId id, double t) const;

 private:
  PointMeasure initial_;
  std::vector<GenealogyEvent> events_;
  double horizon_ = 0.0;
  std::unordered_map<ParticleId, Lifeline> index_;
};

struct BranchingOptions {
  /// Largest population the simulation may reach before CapExceeded.
  std::size_t max_population = 1'000'000;
  /// Upper bound on executed events; 0 means unlimited.
  std::uint64_t max_events = 0;
};

/// Exact simulation of the (G, b, d) binary branching particle system from
/// nu0 on [0, T], recording the full genealogy.
Genealogy simulate_bbps(const MotionCtmc& motion, const Field& b, const Field& d, const PointMeasure& nu0, double T,
                        RngStream& rng, const BranchingOptions& options = {});

/// Same system observed only at the (nondecreasing) times in `grid`, without
/// a genealogy. Ids of new particles are drawn from `ids`.
std::vector<PointMeasure> simulate_bbps_snapshots(const MotionCtmc& motion, const Field& b, const Field& d,
                                                  const PointMeasure& nu0, const std::vector<double>& grid,
                                                  RngStream& rng, IdSource& ids,
                                                  const BranchingOptions& options = {});

/// Particles alive at time t (after all events at t), sorted by id.
PointMeasure alive_at(const Genealogy& g, double t);

/// Ancestral trajectory of `id` on [0, t]: the path of its time-t ancestor,
/// concatenated with the paths of that ancestor's own ancestors. Requires
/// t <= end of `id`'s life and t <= horizon.
JumpPath lineage_prefix(const Genealogy& g, ParticleId id, double t);

/// Line-oriented CSV log `time,kind,id,parent,state`. Founders are written as
/// births at time 0 with parent 0. Lines starting with '#' carry metadata;
/// the horizon is stored as "# horizon=<T>".
void write_event_log(std::ostream& out, const Genealogy& g, const std::vector<std::string>& metadata = {});
Genealogy read_event_log(std::istream& in, std::size_t num_states);

}  // namespace supertrim
