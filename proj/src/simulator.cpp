#include "zrp/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace zrp {

ZrpSimulator::ZrpSimulator(const EnergyModel& model, const Configuration& initial)
    : model_(model) {
  const double nd = static_cast<double>(model.n());
  inv_n2_ = 1.0 / (nd * nd);
  counts_.assign(2, 0);
  lambda_.assign(2, 0.0);
  slot_.assign(2, kNoSlot);
  lambda_[1] = model_.lambda(1);
  rate_bound_ = 1.0 + lambda_[1];
  grow(std::max<Site>(initial.max_site() + 1, 16));
  for (const auto& [site, count] : initial) {
    counts_[site] = count;
    total_ += count;
    fill(site);
  }
}

double ZrpSimulator::site_rate(Site k) const noexcept {
  if (counts_[k] == 0) return 0.0;
  return lambda_[k] + (k > 1 ? 1.0 : 0.0);
}

double ZrpSimulator::total_rate() const noexcept {
  double s = 0.0;
  for (Site k : occupied_) s += site_rate(k);
  return s;
}

void ZrpSimulator::fill(Site k) {
  slot_[k] = occupied_.size();
  occupied_.push_back(k);
}

void ZrpSimulator::vacate(Site k) {
  const std::size_t i = slot_[k];
  const Site last = occupied_.back();
  occupied_[i] = last;
  slot_[last] = i;
  occupied_.pop_back();
  slot_[k] = kNoSlot;
}

void ZrpSimulator::grow(Site needed) {
  if (needed < counts_.size()) return;
  std::size_t size = counts_.size();
  while (size <= needed) size *= 2;
  const std::size_t old = counts_.size();
  counts_.resize(size, 0);
  lambda_.resize(size);
  slot_.resize(size, kNoSlot);
  for (std::size_t k = std::max<std::size_t>(old, 1); k < size; ++k) {
    lambda_[k] = model_.lambda(static_cast<std::int64_t>(k));
    rate_bound_ = std::max(rate_bound_, 1.0 + lambda_[k]);
  }
}

Event ZrpSimulator::propose(Rng& rng) const {
  Event ev;
  if (occupied_.empty()) return ev;
  const double proposal_rate = rate_bound_ * static_cast<double>(occupied_.size());
  double wait = 0.0;
  while (true) {
    wait += rng.exponential(proposal_rate);
    const Site k = occupied_[rng.below(occupied_.size())];
    // One uniform on [0, bound) selects right (< lambda_k), left (next unit, k > 1) or rejection.
    const double v = rng.uniform() * rate_bound_;
    const double right = lambda_[k];
    if (v < right) {
      ev.to = k + 1;
    } else if (k > 1 && v < right + 1.0) {
      ev.to = k - 1;
    } else {
      continue;
    }
    ev.from = k;
    ev.holding_time = wait;
    return ev;
  }
}

void ZrpSimulator::apply(Site from, Site to) {
  if (from == 0 || to == 0 || at(from) == 0 || (to != from + 1 && to + 1 != from))
    throw std::invalid_argument("invalid move");
  if (to + 1 >= counts_.size()) grow(to + 1);
  if (--counts_[from] == 0) vacate(from);
  if (++counts_[to] == 1) fill(to);
#ifdef ZRP_CHECK_INVARIANTS
  if (!check_invariants()) throw std::logic_error("simulator invariants violated");
#endif
}

Event ZrpSimulator::step(Rng& rng) {
  Event ev = propose(rng);
  if (ev.none()) return ev;
  apply(ev.from, ev.to);
  t_macro_ += ev.holding_time * inv_n2_;
  return ev;
}

Configuration ZrpSimulator::configuration() const {
  Configuration c;
  for (Site k = 1; k < counts_.size(); ++k)
    if (counts_[k] != 0) c.add(k, counts_[k]);
  return c;
}

bool ZrpSimulator::check_invariants() const {
  Count mass = 0;
  std::size_t occupied = 0;
  for (Site k = 1; k < counts_.size(); ++k) {
    mass += counts_[k];
    if (1.0 + lambda_[k] > rate_bound_) return false;
    if (counts_[k] == 0) {
      if (slot_[k] != kNoSlot) return false;
      continue;
    }
    ++occupied;
    if (slot_[k] >= occupied_.size() || occupied_[slot_[k]] != k) return false;
  }
  return mass == total_ && occupied == occupied_.size();
}

namespace {

void check_snapshot_times(std::span<const double> times, double t_target) {
  if (!(t_target >= 0.0)) throw std::invalid_argument("target time must be nonnegative");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0 || times[i] > t_target)
      throw std::invalid_argument("snapshot times must lie in [0, t_target]");
    if (i > 0 && times[i] < times[i - 1]) throw std::invalid_argument("snapshot times must be sorted");
  }
}

}  // namespace

Trajectory run_until(const Configuration& initial, const EnergyModel& model, double t_target,
                     std::span<const double> snapshot_times, Rng& rng, const RunOptions& options) {
  check_snapshot_times(snapshot_times, t_target);
  Trajectory traj;
  traj.n = model.n();
  traj.initial = initial;
  traj.has_event_log = options.record_events;
  ZrpSimulator sim(model, initial);
  SimObserver* obs = options.observer;
  const double nd = static_cast<double>(model.n());
  const double inv_n2 = 1.0 / (nd * nd);
  double t_event = 0.0;  // time of the last applied event
  double t_seen = 0.0;   // time up to which the observer has been advanced
  std::size_t next_snap = 0;

  auto reach = [&](double t_next) {
    while (next_snap < snapshot_times.size() && snapshot_times[next_snap] < t_next) {
      const double ts = snapshot_times[next_snap++];
      if (obs) {
        obs->advance(ts - t_seen);
        obs->mark(ts);
      }
      t_seen = ts;
      traj.snapshots.push_back({ts, sim.configuration()});
    }
  };

  while (true) {
    if (traj.event_count >= options.event_cap) {
      traj.truncated = true;
      break;
    }
    const Event ev = sim.propose(rng);
    const double t_next = ev.none() ? std::numeric_limits<double>::infinity()
                                    : t_event + ev.holding_time * inv_n2;
    if (t_next > t_target) {
      // Memorylessness: the overshooting clock is discarded without bias.
      reach(std::numeric_limits<double>::infinity());
      if (obs) obs->advance(t_target - t_seen);
      t_seen = t_target;
      break;
    }
    reach(t_next);
    if (obs) obs->advance(t_next - t_seen);
    t_seen = t_event = t_next;
    sim.apply(ev.from, ev.to);
    ++traj.event_count;
    if (options.record_events) traj.events.push_back({t_next, ev.from, ev.to});
    if (obs) obs->moved(ev.from, ev.to, sim);
  }
  traj.t_end = t_seen;
  return traj;
}

CoupledTrajectory run_coupled(const Configuration& lower, const Configuration& upper,
                              const EnergyModel& model, double t_target,
                              std::span<const double> snapshot_times, Rng& rng,
                              const RunOptions& options) {
  if (!lower.dominated_by(upper)) throw std::invalid_argument("run_coupled requires lower <= upper");
  check_snapshot_times(snapshot_times, t_target);
  CoupledTrajectory out;
  for (Trajectory* tr : {&out.lower, &out.upper}) {
    tr->n = model.n();
    tr->has_event_log = options.record_events;
  }
  out.lower.initial = lower;
  out.upper.initial = upper;
  ZrpSimulator lo(model, lower);
  ZrpSimulator up(model, upper);
  const double nd = static_cast<double>(model.n());
  const double inv_n2 = 1.0 / (nd * nd);
  double t_event = 0.0;
  std::size_t next_snap = 0;

  auto reach = [&](double t_next) {
    while (next_snap < snapshot_times.size() && snapshot_times[next_snap] < t_next) {
      const double ts = snapshot_times[next_snap++];
      out.lower.snapshots.push_back({ts, lo.configuration()});
      out.upper.snapshots.push_back({ts, up.configuration()});
    }
  };

  double t_end = t_target;
  while (true) {
    if (out.upper.event_count >= options.event_cap) {
      out.upper.truncated = out.lower.truncated = true;
      t_end = t_event;
      break;
    }
    const Event ev = up.propose(rng);
    const double t_next = ev.none() ? std::numeric_limits<double>::infinity()
                                    : t_event + ev.holding_time * inv_n2;
    if (t_next > t_target) {
      reach(std::numeric_limits<double>::infinity());
      break;
    }
    reach(t_next);
    t_event = t_next;
    up.apply(ev.from, ev.to);
    ++out.upper.event_count;
    if (options.record_events) out.upper.events.push_back({t_next, ev.from, ev.to});
    if (lo.at(ev.from) > 0) {
      lo.apply(ev.from, ev.to);
      ++out.lower.event_count;
      if (options.record_events) out.lower.events.push_back({t_next, ev.from, ev.to});
    }
    if (lo.at(ev.from) > up.at(ev.from)) ++out.order_violations;
    if (lo.at(ev.to) > up.at(ev.to)) ++out.order_violations;
  }
  out.lower.t_end = out.upper.t_end = t_end;
  return out;
}

void write_trajectory(std::ostream& out, const Trajectory& traj) {
  out << "# zrp-trajectory v1 N=" << traj.n << '\n';
  auto record = [&out](double t, const Configuration& c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", t);
    out << buf << ' ' << c.occupied_sites();
    for (const auto& [site, count] : c) out << ' ' << site << ':' << count;
    out << '\n';
  };
  record(0.0, traj.initial);
  for (const auto& s : traj.snapshots) record(s.t_macro, s.config);
  out << "# events=" << traj.event_count << " truncated=" << (traj.truncated ? 1 : 0) << '\n';
}

Trajectory read_trajectory(std::istream& in) {
  Trajectory traj;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# zrp-trajectory v1 N=", 0) != 0)
    throw std::runtime_error("not a zrp-trajectory v1 stream");
  traj.n = std::stoll(line.substr(std::string("# zrp-trajectory v1 N=").size()));
  bool have_initial = false;
  bool have_trailer = false;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      unsigned long long events = 0;
      int truncated = 0;
      if (std::sscanf(line.c_str(), "# events=%llu truncated=%d", &events, &truncated) != 2)
        throw std::runtime_error("line " + std::to_string(line_no) + ": malformed trailer");
      traj.event_count = events;
      traj.truncated = truncated != 0;
      have_trailer = true;
      continue;
    }
    std::istringstream ls(line);
    double t = 0.0;
    std::size_t pairs = 0;
    if (!(ls >> t >> pairs)) throw std::runtime_error("line " + std::to_string(line_no) + ": malformed record");
    Configuration c;
    for (std::size_t i = 0; i < pairs; ++i) {
      Site site = 0;
      Count count = 0;
      char colon = 0;
      if (!(ls >> site >> colon >> count) || colon != ':' || count == 0)
        throw std::runtime_error("line " + std::to_string(line_no) + ": malformed site:count pair");
      if (c.at(site) != 0) throw std::runtime_error("line " + std::to_string(line_no) + ": repeated site");
      c.set(site, count);
    }
    std::string extra;
    if (ls >> extra) throw std::runtime_error("line " + std::to_string(line_no) + ": trailing data");
    if (!have_initial) {
      traj.initial = std::move(c);
      have_initial = true;
    } else {
      traj.snapshots.push_back({t, std::move(c)});
      traj.t_end = t;
    }
  }
  if (!have_initial || !have_trailer) throw std::runtime_error("truncated trajectory stream");
  return traj;
}

}  // namespace zrp
