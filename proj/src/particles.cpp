#include "supertrim/particles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "branching_engine.hpp"
#include "supertrim/error.hpp"

namespace supertrim {

namespace {

constexpr double kNever = std::numeric_limits<double>::infinity();

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

[[noreturn]] void bad_log(std::size_t index, const std::string& what) {
  std::ostringstream os;
  os << "genealogy event " << index << ": " << what;
  throw DomainError(os.str());
}

ParticleId next_free_id(const PointMeasure& nu) {
  ParticleId top = 0;
  for (const auto& a : nu.atoms()) top = std::max(top, a.id);
  return top + 1;
}

}  // namespace

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kBirth: return "birth";
    case EventKind::kJump: return "jump";
    case EventKind::kSplit: return "split";
    case EventKind::kDeath: return "death";
  }
  return "?";
}

EventKind event_kind_from_string(const std::string& s) {
  if (s == "birth") return EventKind::kBirth;
  if (s == "jump") return EventKind::kJump;
  if (s == "split") return EventKind::kSplit;
  if (s == "death") return EventKind::kDeath;
  throw DomainError("unknown event kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Genealogy

Genealogy::Genealogy(PointMeasure initial, std::vector<GenealogyEvent> events, double horizon)
    : initial_(std::move(initial)), events_(std::move(events)), horizon_(horizon) {
  if (!(horizon_ >= 0.0) || !std::isfinite(horizon_)) throw DomainError("genealogy horizon must be finite and >= 0");
  std::unordered_map<ParticleId, StateIndex> current;
  for (const auto& a : initial_.atoms()) {
    if (a.id == 0) throw DomainError("particle id 0 is reserved for 'no parent'");
    index_.emplace(a.id, Lifeline{0, 0.0, kNever, a.state, false, {}});
    current.emplace(a.id, a.state);
  }

  double last_time = 0.0;
  ParticleId pending_parent = 0;
  int pending_children = 0;
  double pending_time = 0.0;
  StateIndex pending_state = 0;

  for (std::size_t i = 0; i < events_.size(); ++i) {
    const auto& e = events_[i];
    if (!(e.time >= last_time) || e.time > horizon_) bad_log(i, "times must be nondecreasing within [0, horizon]");
    last_time = e.time;
    if (e.state >= num_states()) bad_log(i, "state outside the state space");

    if (e.kind == EventKind::kBirth) {
      if (pending_children == 0 || e.parent != pending_parent) bad_log(i, "birth without a matching split");
      if (e.time != pending_time || e.state != pending_state) bad_log(i, "child not born at the parent's time and state");
      if (e.id == 0 || index_.count(e.id)) bad_log(i, "particle id reused");
      index_.emplace(e.id, Lifeline{e.parent, e.time, kNever, e.state, false, {}});
      current.emplace(e.id, e.state);
      --pending_children;
      continue;
    }
    if (pending_children != 0) bad_log(i, "split must be followed by exactly two births");

    auto it = current.find(e.id);
    if (it == current.end()) bad_log(i, "event for a particle that is not alive");
    auto& life = index_.at(e.id);
    if (e.parent != life.parent) bad_log(i, "parent column disagrees with the particle's parent");
    switch (e.kind) {
      case EventKind::kJump:
        if (e.state == it->second) bad_log(i, "jump to the current state");
        it->second = e.state;
        life.jumps.push_back(i);
        break;
      case EventKind::kSplit:
        if (e.state != it->second) bad_log(i, "split recorded away from the particle's state");
        life.end = e.time;
        life.split = true;
        current.erase(it);
        pending_parent = e.id;
        pending_children = 2;
        pending_time = e.time;
        pending_state = e.state;
        break;
      case EventKind::kDeath:
        if (e.state != it->second) bad_log(i, "death recorded away from the particle's state");
        life.end = e.time;
        current.erase(it);
        break;
      case EventKind::kBirth:
        break;
    }
  }
  if (pending_children != 0) throw DomainError("genealogy log ends inside a split");
}

const Genealogy::Lifeline& Genealogy::lifeline(ParticleId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DomainError("unknown particle id " + std::to_string(id));
  return it->second;
}

StateIndex Genealogy::state_at(ParticleId id, double t) const {
  const auto& life = lifeline(id);
  if (t < life.birth || t > life.end || t > horizon_) {
    throw DomainError("particle " + std::to_string(id) + " is not alive at t=" + format_double(t));
  }
  StateIndex s = life.birth_state;
  for (auto j : life.jumps) {
    if (events_[j].time > t) break;
    s = events_[j].state;
  }
  return s;
}

ParticleId Genealogy::ancestor_at(ParticleId id, double t) const {
  if (t < 0.0 || t > horizon_) throw DomainError("time outside [0, horizon]");
  const Lifeline* life = &lifeline(id);
  if (t > life->end) {
    throw DomainError("particle " + std::to_string(id) + " ended before t=" + format_double(t));
  }
  while (life->birth > t) {
    id = life->parent;
    life = &lifeline(id);
  }
  return id;
}

// ---------------------------------------------------------------------------
// Simulation

Genealogy simulate_bbps(const MotionCtmc& motion, const Field& b, const Field& d, const PointMeasure& nu0, double T,
                        RngStream& rng, const BranchingOptions& options) {
  require_same_size(motion.size(), b.size(), "simulate_bbps");
  require_same_size(motion.size(), d.size(), "simulate_bbps");
  require_same_size(motion.size(), nu0.num_states(), "simulate_bbps");
  if (!(T >= 0.0) || !std::isfinite(T)) throw DomainError("simulate_bbps: horizon must be finite and >= 0");

  IdSource ids(next_free_id(nu0));
  std::vector<GenealogyEvent> log;
  detail::BranchingEngine engine(motion, b.values(), d.values(), rng, ids, options);
  engine.set_log(&log);
  for (const auto& a : nu0.atoms()) engine.add(a.state, a.id);
  engine.advance_to(T);
  return Genealogy(nu0, std::move(log), T);
}

std::vector<PointMeasure> simulate_bbps_snapshots(const MotionCtmc& motion, const Field& b, const Field& d,
                                                  const PointMeasure& nu0, const std::vector<double>& grid,
                                                  RngStream& rng, IdSource& ids, const BranchingOptions& options) {
  require_same_size(motion.size(), b.size(), "simulate_bbps_snapshots");
  require_same_size(motion.size(), d.size(), "simulate_bbps_snapshots");
  require_same_size(motion.size(), nu0.num_states(), "simulate_bbps_snapshots");
  double prev = 0.0;
  for (double t : grid) {
    if (!(t >= prev) || !std::isfinite(t)) throw DomainError("observation grid must be finite, >= 0 and nondecreasing");
    prev = t;
  }
  detail::BranchingEngine engine(motion, b.values(), d.values(), rng, ids, options);
  for (const auto& a : nu0.atoms()) engine.add(a.state, a.id);
  std::vector<PointMeasure> out;
  out.reserve(grid.size());
  for (double t : grid) {
    engine.advance_to(t);
    out.push_back(engine.snapshot());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Queries

PointMeasure alive_at(const Genealogy& g, double t) {
  if (t < 0.0 || t > g.horizon()) throw DomainError("alive_at: time beyond the simulated horizon");
  std::vector<Atom> atoms;
  std::vector<ParticleId> candidates;
  candidates.reserve(g.num_particles());
  for (const auto& a : g.initial().atoms()) candidates.push_back(a.id);
  for (const auto& e : g.events()) {
    if (e.kind == EventKind::kBirth) candidates.push_back(e.id);
  }
  for (ParticleId id : candidates) {
    const auto& life = g.lifeline(id);
    if (life.birth <= t && t < life.end) atoms.push_back({g.state_at(id, t), id});
  }
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.id < b.id; });
  return PointMeasure(g.num_states(), std::move(atoms));
}

JumpPath lineage_prefix(const Genealogy& g, ParticleId id, double t) {
  const ParticleId at_t = g.ancestor_at(id, t);
  std::vector<ParticleId> chain{at_t};
  while (g.lifeline(chain.back()).parent != 0) chain.push_back(g.lifeline(chain.back()).parent);
  std::reverse(chain.begin(), chain.end());

  JumpPath path{g.lifeline(chain.front()).birth_state, {}, t};
  for (ParticleId p : chain) {
    for (auto j : g.lifeline(p).jumps) {
      const auto& e = g.events()[j];
      if (e.time > t) break;
      path.jumps.push_back({e.time, e.state});
    }
  }
  return path;
}

// ---------------------------------------------------------------------------
// Event log

void write_event_log(std::ostream& out, const Genealogy& g, const std::vector<std::string>& metadata) {
  for (const auto& m : metadata) out << "# " << m << '\n';
  out << "# horizon=" << format_double(g.horizon()) << '\n';
  out << "time,kind,id,parent,state\n";
  for (const auto& a : g.initial().atoms()) out << "0,birth," << a.id << ",0," << a.state << '\n';
  for (const auto& e : g.events()) {
    out << format_double(e.time) << ',' << to_string(e.kind) << ',' << e.id << ',' << e.parent << ',' << e.state
        << '\n';
  }
}

Genealogy read_event_log(std::istream& in, std::size_t num_states) {
  std::vector<Atom> founders;
  std::vector<GenealogyEvent> events;
  double horizon = -1.0;
  bool header = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("horizon=");
      if (pos != std::string::npos) horizon = std::stod(line.substr(pos + 8));
      continue;
    }
    if (!header) {
      if (line != "time,kind,id,parent,state") throw DomainError("event log: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 5) throw DomainError("event log line " + std::to_string(lineno) + ": expected 5 columns");
    GenealogyEvent e;
    try {
      e.time = std::stod(cols[0]);
      e.kind = event_kind_from_string(cols[1]);
      e.id = std::stoull(cols[2]);
      e.parent = std::stoull(cols[3]);
      e.state = static_cast<StateIndex>(std::stoul(cols[4]));
    } catch (const std::logic_error&) {
      throw DomainError("event log line " + std::to_string(lineno) + ": malformed record");
    }
    const bool founder = e.kind == EventKind::kBirth && e.parent == 0 && e.time == 0.0;
    if (founder) {
      if (!events.empty()) throw DomainError("event log: founders must precede all events");
      founders.push_back({e.state, e.id});
    } else {
      events.push_back(e);
    }
  }
  if (!header) throw DomainError("event log: missing header");
  if (horizon < 0.0) horizon = events.empty() ? 0.0 : events.back().time;
  return Genealogy(PointMeasure(num_states, std::move(founders)), std::move(events), horizon);
}

}  // namespace supertrim
