#pragma once

#include "zrp/configuration.hpp"
#include "zrp/energy_model.hpp"
#include "zrp/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace zrp {

/// One transition of the chain. `from == 0` marks the empty configuration,
/// whose holding time is infinite.
struct Event {
  double holding_time = std::numeric_limits<double>::infinity();
  Site from = 0;
  Site to = 0;
  bool none() const noexcept { return from == 0; }
};

/// Callbacks driven by run_until. `advance` covers a stretch of macroscopic
/// time with the configuration frozen; `moved` follows each applied event.
class SimObserver {
 public:
  virtual ~SimObserver() = default;
  virtual void advance(double dt_macro) = 0;
  virtual void moved(Site from, Site to, const class ZrpSimulator& sim) = 0;
  virtual void mark(double /*t_macro*/) {}
};

/// Exact continuous-time simulation of the zero-range process on Z+.
///
/// Occupied site k jumps right at rate lambda_k and left at rate 1 (k > 1).
/// Events are drawn by thinning: a uniformly chosen occupied site fires at
/// the uniform bound rate_bound() and the move is kept with probability
/// rate / rate_bound(); rejected proposals only add holding time. Holding
/// times and moves have exactly the law of the chain at O(1) cost per event.
/// The macroscopic clock t_micro / N^2 is the stored quantity.
class ZrpSimulator {
 public:
  ZrpSimulator(const EnergyModel& model, const Configuration& initial);

  const EnergyModel& model() const noexcept { return model_; }
  double t_macro() const noexcept { return t_macro_; }
  /// Exact sum of the site rates, O(occupied sites).
  double total_rate() const noexcept;
  /// Upper bound on every site rate, 1 + max lambda_k over the capacity.
  double rate_bound() const noexcept { return rate_bound_; }
  std::size_t occupied_sites() const noexcept { return occupied_.size(); }
  Count total() const noexcept { return total_; }
  Count at(Site k) const noexcept { return k < counts_.size() ? counts_[k] : 0; }
  std::size_t capacity() const noexcept { return counts_.size() - 1; }

  /// Draws the next event at the current configuration without applying it.
  Event propose(Rng& rng) const;
  /// Applies a single move from -> to (neighbouring sites, from occupied).
  void apply(Site from, Site to);
  /// propose + apply + clock advance.
  Event step(Rng& rng);

  Configuration configuration() const;

  /// Full recomputation of the occupied list, rate bound and mass; true if consistent.
  bool check_invariants() const;

 private:
  static constexpr std::size_t kNoSlot = static_cast<std::size_t>(-1);

  double site_rate(Site k) const noexcept;
  void fill(Site k);
  void vacate(Site k);
  void grow(Site needed);

  EnergyModel model_;
  std::vector<Count> counts_;    // counts_[0] unused
  std::vector<double> lambda_;   // lambda_[k] for k < counts_.size()
  std::vector<Site> occupied_;   // occupied sites, unordered
  std::vector<std::size_t> slot_;  // position of site k in occupied_, or kNoSlot
  double rate_bound_ = 2.0;
  Count total_ = 0;
  double t_macro_ = 0.0;
  double inv_n2_ = 1.0;
};

struct Snapshot {
  double t_macro = 0.0;
  Configuration config;
};

struct EventRecord {
  double t_macro = 0.0;
  Site from = 0;
  Site to = 0;
};

struct Trajectory {
  std::int64_t n = 0;
  Configuration initial;
  std::vector<Snapshot> snapshots;
  bool has_event_log = false;
  std::vector<EventRecord> events;
  std::uint64_t event_count = 0;
  /// Event budget hit before the target time.
  bool truncated = false;
  double t_end = 0.0;
};

struct RunOptions {
  std::uint64_t event_cap = std::numeric_limits<std::uint64_t>::max();
  bool record_events = false;
  SimObserver* observer = nullptr;
};

/// Simulates to macroscopic time `t_target`. Each snapshot holds the state
/// after the last event at or before its time. Throws if `snapshot_times` is
/// unsorted or outside [0, t_target].
Trajectory run_until(const Configuration& initial, const EnergyModel& model, double t_target,
                     std::span<const double> snapshot_times, Rng& rng, const RunOptions& options = {});

struct CoupledTrajectory {
  Trajectory lower;
  Trajectory upper;
  /// Sites found out of order after an event (checked on the affected sites).
  std::uint64_t order_violations = 0;
};

/// Basic coupling: the upper chain's clocks drive both; the lower copy moves
/// along whenever its departure site is occupied. Throws unless lower <= upper.
CoupledTrajectory run_coupled(const Configuration& lower, const Configuration& upper,
                              const EnergyModel& model, double t_target,
                              std::span<const double> snapshot_times, Rng& rng,
                              const RunOptions& options = {});

/// Line format: header `# zrp-trajectory v1 N=<n>`, then one record per
/// configuration `t_macro n_pairs site:count ...` (initial first), then
/// `# events=<count> truncated=<0|1>`.
void write_trajectory(std::ostream& out, const Trajectory& traj);
Trajectory read_trajectory(std::istream& in);

}  // namespace zrp
