#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "zrp/gibbs_measures.hpp"
#include "zrp/simulator.hpp"
#include "zrp/stats.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

using namespace zrp;

namespace {

Configuration config_of(std::initializer_list<std::pair<const Site, Count>> entries) {
  return Configuration(Configuration::Map(entries));
}

// Transition probabilities from site 1 of a single particle on sites 1..sites,
// built from the eigendecomposition of the symmetrized birth-death generator.
std::vector<double> single_particle_law(const EnergyModel& model, std::size_t sites, double t_micro) {
  const auto d = static_cast<Eigen::Index>(sites);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i + 1 < d; ++i) {
    q(i, i + 1) = model.lambda(static_cast<std::int64_t>(i + 1));
    q(i + 1, i) = 1.0;
  }
  for (Eigen::Index i = 0; i < d; ++i) q(i, i) = -q.row(i).sum();
  Eigen::VectorXd weight(d);
  for (Eigen::Index i = 0; i < d; ++i) weight(i) = model.theta(static_cast<std::int64_t>(i + 1));
  const Eigen::VectorXd root = weight.cwiseSqrt();
  const Eigen::MatrixXd sym = root.asDiagonal() * q * root.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (sym + sym.transpose()));
  const Eigen::VectorXd decay = (eig.eigenvalues().array() * t_micro).exp();
  const Eigen::MatrixXd p_sym = eig.eigenvectors() * decay.asDiagonal() * eig.eigenvectors().transpose();
  const Eigen::MatrixXd p = root.cwiseInverse().asDiagonal() * p_sym * root.asDiagonal();
  std::vector<double> out(sites);
  for (Eigen::Index j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = p(0, j);
  return out;
}

// Rate of the move from -> to in configuration eta.
double move_rate(const EnergyModel& model, Site from, Site to) {
  return to == from + 1 ? model.lambda(static_cast<std::int64_t>(from)) : 1.0;
}

}  // namespace

TEST_CASE("a lone particle at site 1 can only move right") {
  const EnergyModel model(EnergyRegime::log_energy(0.5), 10);
  ZrpSimulator sim(model, config_of({{1, 1}}));
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto ev = sim.propose(rng);
    REQUIRE(ev.from == 1);
    REQUIRE(ev.to == 2);
    REQUIRE(ev.holding_time > 0.0);
  }
  CHECK(sim.total_rate() == doctest::Approx(model.lambda(1)).epsilon(1e-15));
}

TEST_CASE("the empty configuration signals no event") {
  const EnergyModel model(EnergyRegime::beta0(), 10);
  ZrpSimulator sim(model, Configuration{});
  Rng rng(1);
  const auto ev = sim.step(rng);
  CHECK(ev.none());
  CHECK(std::isinf(ev.holding_time));
  CHECK(sim.t_macro() == 0.0);
  const std::vector<double> times{0.0, 1.0};
  const auto traj = run_until(Configuration{}, model, 1.0, times, rng);
  CHECK(traj.event_count == 0);
  CHECK(traj.snapshots.size() == 2);
  CHECK(traj.snapshots[1].config.empty());
}

TEST_CASE("proposed moves follow the jump chain law, holding times the total rate") {
  const EnergyModel model(EnergyRegime::sub_log_energy(1.0), 20);
  ZrpSimulator sim(model, config_of({{1, 3}, {5, 1}, {6, 2}, {40, 1}}));
  const std::vector<std::pair<Site, Site>> moves{{1, 2}, {5, 6}, {5, 4}, {6, 7}, {6, 5}, {40, 41}, {40, 39}};
  double total = 0.0;
  for (auto [from, to] : moves) total += move_rate(model, from, to);
  CHECK(sim.total_rate() == doctest::Approx(total).epsilon(1e-14));
  CHECK(sim.rate_bound() >= 1.0 + model.lambda(1));

  std::map<std::pair<Site, Site>, std::uint64_t> counts;
  RunningStats wait;
  Rng rng(77);
  constexpr int kDraws = 200000;
  for (int i = 0; i < kDraws; ++i) {
    const auto ev = sim.propose(rng);
    ++counts[{ev.from, ev.to}];
    wait.add(ev.holding_time);
  }
  std::vector<std::uint64_t> observed;
  std::vector<double> expected;
  for (auto move : moves) {
    observed.push_back(counts[move]);
    expected.push_back(move_rate(model, move.first, move.second) / total);
  }
  std::uint64_t seen = 0;
  for (auto c : observed) seen += c;
  CHECK(seen == kDraws);
  // The last cell is absorbed into the remainder, so the probabilities need not sum to one.
  expected.pop_back();
  const auto gof = chi_square_gof(observed, expected);
  CHECK(gof.p_value >= 1e-3);
  CHECK(std::abs(wait.mean() - 1.0 / total) <= 4.0 * wait.stderr_mean());
}

TEST_CASE("single particle law against the birth-death oracle") {
  const EnergyModel model(EnergyRegime::beta0(), 1);
  constexpr std::size_t kSites = 40;
  constexpr double kTime = 0.5;
  const auto oracle = single_particle_law(model, kSites, kTime);
  constexpr int kRuns = 20000;
  std::vector<double> hits(kSites + 1, 0.0);
  Rng rng(5150);
  const std::vector<double> times{kTime};
  for (int r = 0; r < kRuns; ++r) {
    const auto traj = run_until(config_of({{1, 1}}), model, kTime, times, rng);
    const auto& final_config = traj.snapshots.back().config;
    REQUIRE(final_config.total() == 1);
    hits[std::min<std::size_t>(final_config.begin()->first, kSites)] += 1.0;
  }
  for (std::size_t site : {1, 2, 3}) {
    CAPTURE(site);
    const double p = oracle[site - 1];
    const double se = std::sqrt(p * (1.0 - p) / kRuns);
    CHECK(std::abs(hits[site] / kRuns - p) <= 3.0 * se);
  }
}

TEST_CASE("long-run occupation of site 1 matches the stationary weight") {
  // One particle, N = 1: stationary law proportional to theta_k = e^{-k}.
  const EnergyModel model(EnergyRegime::beta0(), 1);
  ZrpSimulator sim(model, config_of({{1, 1}}));
  Rng rng(8);
  constexpr int kBatches = 50;
  constexpr double kBatchTime = 2000.0;
  RunningStats batches;
  Site position = 1;
  for (int b = 0; b < kBatches; ++b) {
    double at_one = 0.0;
    double elapsed = 0.0;
    while (elapsed < kBatchTime) {
      const auto ev = sim.step(rng);
      const double dt = std::min(ev.holding_time, kBatchTime - elapsed);
      if (position == 1) at_one += dt;
      elapsed += dt;
      position = ev.to;
    }
    batches.add(at_one / kBatchTime);
  }
  const double oracle = -std::expm1(-1.0);
  CHECK(std::abs(batches.mean() - oracle) <= 3.0 * batches.stderr_mean());
}

TEST_CASE("run_until bookkeeping") {
  const EnergyModel model(EnergyRegime::beta0(), 50);
  Rng seed_rng(11);
  const auto initial = sample(invariant_measure(model, 0.5), seed_rng);
  REQUIRE(initial.total() > 0);

  SUBCASE("zero target returns the initial configuration") {
    Rng rng(1);
    const std::vector<double> times{0.0};
    const auto traj = run_until(initial, model, 0.0, times, rng);
    CHECK(traj.event_count == 0);
    REQUIRE(traj.snapshots.size() == 1);
    CHECK(traj.snapshots[0].config == initial);
  }
  SUBCASE("mass conservation and invariants at every snapshot") {
    Rng rng(2);
    const std::vector<double> times{0.0, 0.01, 0.02, 0.05};
    const auto traj = run_until(initial, model, 0.05, times, rng);
    CHECK(traj.event_count > 0);
    CHECK_FALSE(traj.truncated);
    for (const auto& snap : traj.snapshots) {
      CHECK(snap.config.total() == initial.total());
      CHECK(snap.config.consistent());
    }
  }
  SUBCASE("event cap truncates with a flag") {
    Rng rng(3);
    const std::vector<double> times{0.05};
    RunOptions options;
    options.event_cap = 100;
    const auto traj = run_until(initial, model, 0.05, times, rng, options);
    CHECK(traj.truncated);
    CHECK(traj.event_count == 100);
    CHECK(traj.t_end < 0.05);
  }
  SUBCASE("the event log replays to the recorded snapshots") {
    Rng rng(4);
    const std::vector<double> times{0.01, 0.03};
    RunOptions options;
    options.record_events = true;
    const auto traj = run_until(initial, model, 0.03, times, rng, options);
    REQUIRE(traj.has_event_log);
    CHECK(traj.events.size() == traj.event_count);
    Configuration replay = initial;
    std::size_t next = 0;
    for (const auto& snap : traj.snapshots) {
      while (next < traj.events.size() && traj.events[next].t_macro <= snap.t_macro) {
        replay.remove_one(traj.events[next].from);
        replay.add(traj.events[next].to);
        ++next;
      }
      CHECK(replay == snap.config);
    }
  }
  SUBCASE("rejects unsorted or out-of-range snapshot times") {
    Rng rng(5);
    const std::vector<double> unsorted{0.02, 0.01};
    const std::vector<double> late{0.5};
    CHECK_THROWS_AS(run_until(initial, model, 0.05, unsorted, rng), std::invalid_argument);
    CHECK_THROWS_AS(run_until(initial, model, 0.05, late, rng), std::invalid_argument);
  }
}

TEST_CASE("event count matches the rate estimate") {
  // About 900 particles at N = 200; total rate is close to twice the occupied sites.
  const EnergyModel model(EnergyRegime::beta0(), 200);
  Rng rng(6);
  const auto initial = sample(invariant_measure(model, 0.99), rng);
  CHECK(initial.total() > 500);
  std::vector<double> times;
  for (int i = 0; i <= 10; ++i) times.push_back(0.01 * i);
  const auto traj = run_until(initial, model, 0.1, times, rng);
  double sites = 0.0;
  for (const auto& snap : traj.snapshots) sites += static_cast<double>(snap.config.occupied_sites());
  sites /= static_cast<double>(traj.snapshots.size());
  const double estimate = 2.0 * sites * 200.0 * 200.0 * 0.1;
  const double measured = static_cast<double>(traj.event_count);
  CHECK(measured > 0.5 * estimate);
  CHECK(measured < 2.0 * estimate);
}

TEST_CASE("simulator invariants survive long runs in every regime") {
  for (const auto& regime : {EnergyRegime::beta0(), EnergyRegime::log_energy(0.5), EnergyRegime::sub_log_energy(1.0)}) {
    const EnergyModel model(regime, 30);
    Rng rng(12);
    ZrpSimulator sim(model, sample(invariant_measure(model, 0.7), rng));
    const Count mass = sim.total();
    for (int i = 0; i < 200000; ++i) {
      sim.step(rng);
      if (i % 20000 == 0) REQUIRE(sim.check_invariants());
    }
    CHECK(sim.check_invariants());
    CHECK(sim.total() == mass);
    CHECK(sim.configuration().total() == mass);
    CHECK_THROWS_AS(sim.apply(1000000, 1000001), std::invalid_argument);
  }
}

TEST_CASE("basic coupling") {
  const EnergyModel model(EnergyRegime::log_energy(0.5), 40);
  const std::vector<double> times{0.01, 0.02};
  Rng rng(21);
  const auto upper = sample(invariant_measure(model, 0.6), rng);

  SUBCASE("equal copies move together") {
    const auto run = run_coupled(upper, upper, model, 0.02, times, rng);
    for (std::size_t i = 0; i < times.size(); ++i) CHECK(run.lower.snapshots[i].config == run.upper.snapshots[i].config);
    CHECK(run.order_violations == 0);
  }
  SUBCASE("an empty lower copy stays empty") {
    const auto run = run_coupled(Configuration{}, upper, model, 0.02, times, rng);
    for (const auto& snap : run.lower.snapshots) CHECK(snap.config.empty());
    CHECK(run.upper.snapshots.back().config.total() == upper.total());
  }
  SUBCASE("fuzzed ordered pairs stay ordered") {
    Rng fuzz(22);
    for (int trial = 0; trial < 200; ++trial) {
      Configuration lower;
      for (const auto& [site, count] : upper)
        for (Count i = 0; i < count; ++i)
          if (fuzz.below(2)) lower.add(site);
      const auto run = run_coupled(lower, upper, model, 0.02, times, fuzz);
      REQUIRE(run.order_violations == 0);
      for (std::size_t i = 0; i < times.size(); ++i) {
        REQUIRE(run.lower.snapshots[i].config.dominated_by(run.upper.snapshots[i].config));
        REQUIRE(run.lower.snapshots[i].config.total() == lower.total());
      }
    }
  }
  SUBCASE("rejects unordered pairs") {
    Configuration bigger = upper;
    bigger.add(3, 5);
    CHECK_THROWS_AS(run_coupled(bigger, upper, model, 0.02, times, rng), std::invalid_argument);
  }
}

TEST_CASE("trajectory files round-trip") {
  const EnergyModel model(EnergyRegime::beta0(), 100);
  Rng rng(31);
  const auto initial = sample(invariant_measure(model, 0.5), rng);
  const std::vector<double> times{0.0, 0.01, 0.02};
  const auto traj = run_until(initial, model, 0.02, times, rng);
  std::stringstream buffer;
  write_trajectory(buffer, traj);
  const std::string text = buffer.str();
  CHECK(text.starts_with("# zrp-trajectory v1 N=100\n"));
  const auto back = read_trajectory(buffer);
  CHECK(back.n == 100);
  CHECK(back.initial == traj.initial);
  REQUIRE(back.snapshots.size() == traj.snapshots.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    CHECK(back.snapshots[i].t_macro == traj.snapshots[i].t_macro);
    CHECK(back.snapshots[i].config == traj.snapshots[i].config);
  }
  CHECK(back.event_count == traj.event_count);
  std::stringstream again;
  write_trajectory(again, back);
  CHECK(again.str() == text);

  std::stringstream bad("# zrp-trajectory v1 N=5\n0 1 3:x\n");
  CHECK_THROWS_AS(read_trajectory(bad), std::runtime_error);
  std::stringstream cut("# zrp-trajectory v1 N=5\n0 1 3:2\n");
  CHECK_THROWS_AS(read_trajectory(cut), std::runtime_error);
  std::stringstream alien("hello\n");
  CHECK_THROWS_AS(read_trajectory(alien), std::runtime_error);
}

TEST_CASE("same seed, same trajectory") {
  const EnergyModel model(EnergyRegime::sub_log_energy(1.0), 60);
  Rng a(derive_seed(9, "repro", 60, 0));
  Rng b(derive_seed(9, "repro", 60, 0));
  Rng sa(1), sb(1);
  const auto initial = sample(invariant_measure(model, 0.5), sa);
  CHECK(initial == sample(invariant_measure(model, 0.5), sb));
  const std::vector<double> times{0.01, 0.02};
  const auto ta = run_until(initial, model, 0.02, times, a);
  const auto tb = run_until(initial, model, 0.02, times, b);
  CHECK(ta.event_count == tb.event_count);
  CHECK(ta.snapshots.back().config == tb.snapshots.back().config);
  CHECK(derive_seed(9, "repro", 60, 0) != derive_seed(9, "repro", 60, 1));
  CHECK(derive_seed(9, "repro", 60, 0) != derive_seed(9, "repro", 61, 0));
  CHECK(derive_seed(9, "repro", 60, 0) != derive_seed(10, "repro", 60, 0));
}
