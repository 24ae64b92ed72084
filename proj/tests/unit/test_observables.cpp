#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "zrp/gibbs_measures.hpp"
#include "zrp/observables.hpp"
#include "zrp/stats.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

using namespace zrp;

namespace {

std::vector<EnergyRegime> default_regimes() {
  return {EnergyRegime::beta0(), EnergyRegime::log_energy(0.5), EnergyRegime::sub_log_energy(1.0)};
}

Configuration random_config(Rng& rng, Site max_site, Count max_count) {
  Configuration eta;
  const auto sites = 1 + rng.below(40);
  for (std::uint64_t i = 0; i < sites; ++i) eta.add(1 + rng.below(max_site), 1 + rng.below(max_count));
  return eta;
}

double gk(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 10, 1e-14);
}

}  // namespace

TEST_CASE("basket test functions") {
  const auto& basket_ref = basket();
  REQUIRE(basket_ref.size() == 3);
  CHECK(test_function("g1").a() == 0.2);
  CHECK(test_function("g1").b() == 1.0);
  CHECK(test_function("g2").a() == 0.5);
  CHECK(test_function("g3").b() == 3.0);
  CHECK_THROWS_AS(test_function("g9"), std::invalid_argument);
  CHECK_THROWS_AS(TestFunction("bad", 2.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(TestFunction("bad", 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("test function calculus") {
  for (const auto& g : basket()) {
    CAPTURE(g.id());
    CHECK(g.value(g.a()) == 0.0);
    CHECK(g.value(g.b()) == 0.0);
    CHECK(g.value(0.5 * (g.a() + g.b())) == doctest::Approx(1.0));
    CHECK(g.value(g.a() - 0.1) == 0.0);
    CHECK(g.value(g.b() + 0.1) == 0.0);
    const double h = 1e-5;
    for (double s = -0.95; s < 1.0; s += 0.1) {
      const double x = 0.5 * (g.a() + g.b()) + 0.5 * s * (g.b() - g.a());
      CHECK(g.gradient(x) == doctest::Approx((g.value(x + h) - g.value(x - h)) / (2 * h)).epsilon(1e-6));
      CHECK(g.laplacian(x) == doctest::Approx((g.gradient(x + h) - g.gradient(x - h)) / (2 * h)).epsilon(1e-6));
      CHECK(g.antiderivative(x) == doctest::Approx(gk([&](double y) { return g.value(y); }, 0.0, x)).epsilon(1e-12));
    }
    CHECK(g.integral() == doctest::Approx(gk([&](double y) { return g.value(y); }, g.a(), g.b())).epsilon(1e-13));
    // Sup norms against a dense scan.
    double grad = 0.0, lap = 0.0;
    for (int i = 0; i <= 200000; ++i) {
      const double x = g.a() + (g.b() - g.a()) * i / 200000.0;
      grad = std::max(grad, std::abs(g.gradient(x)));
      lap = std::max(lap, std::abs(g.laplacian(x)));
    }
    CHECK(g.sup_gradient() == doctest::Approx(grad).epsilon(1e-8));
    CHECK(g.sup_laplacian() == doctest::Approx(lap).epsilon(1e-8));
  }
}

// Taylor remainders: |Delta_N G - G''| <= sup|G'''| / (3N), |nabla_N G - G'| <= sup|G''| / (2N).
TEST_CASE("discrete operators converge at rate 1/N") {
  for (const auto& g : basket()) {
    CAPTURE(g.id());
    double third = 0.0;
    const double h = 1e-6;
    for (int i = 0; i <= 100000; ++i) {
      const double x = g.a() + h + (g.b() - g.a() - 2 * h) * i / 100000.0;
      third = std::max(third, std::abs(g.laplacian(x + h) - g.laplacian(x - h)) / (2 * h));
    }
    for (std::int64_t n : {100, 1000, 10000}) {
      double lap = 0.0, grad = 0.0;
      const double nd = static_cast<double>(n);
      for (std::int64_t k = 1; k <= static_cast<std::int64_t>(4 * n); ++k) {
        const double x = static_cast<double>(k) / nd;
        lap = std::max(lap, std::abs(g.discrete_laplacian(n, k) - g.laplacian(x)));
        grad = std::max(grad, std::abs(g.discrete_gradient(n, k) - g.gradient(x)));
      }
      CAPTURE(n);
      CHECK(lap * nd <= third / 3.0 * (1.0 + 1e-6) + 1e-9 * nd * nd);
      CHECK(grad * nd <= g.sup_laplacian() / 2.0 * (1.0 + 1e-9));
    }
  }
}

TEST_CASE("generator coefficients obey their bound") {
  for (const auto& regime : default_regimes()) {
    for (std::int64_t n : {50, 400, 3000}) {
      const EnergyModel model(regime, n);
      for (const auto& g : basket()) {
        const double bound = generator_coefficient_bound(model, g);
        const double expected_bound =
            2.0 * (g.sup_laplacian() + (model.beta() + g.b()) / g.a() * g.sup_gradient());
        CHECK(bound == doctest::Approx(expected_bound).epsilon(1e-14));
        for (std::int64_t k = 1; k <= 4 * n; ++k) {
          const double direct = g.discrete_laplacian(n, k) +
                                static_cast<double>(n) * (model.lambda(k) - 1.0) * g.discrete_gradient(n, k);
          const double coef = generator_coefficient(model, g, k);
          REQUIRE(coef == doctest::Approx(direct).epsilon(1e-9).scale(1.0));
          REQUIRE(std::abs(coef) <= bound);
        }
      }
    }
  }
}

TEST_CASE("empirical pairing") {
  const EnergyModel model(EnergyRegime::log_energy(0.5), 10);
  const TestFunction g("unit", 0.2, 1.0);  // G(0.6) = 1
  CHECK(pair(Configuration{}, model, g) == 0.0);
  Configuration eta;
  eta.add(6, 7);
  CHECK(pair(eta, model, g) == doctest::Approx(model.n_beta() / 10.0 * 7.0).epsilon(1e-14));
  eta.add(11, 3);  // x = 1.1, outside the support
  CHECK(pair(eta, model, g) == doctest::Approx(model.n_beta() / 10.0 * 7.0).epsilon(1e-14));
}

TEST_CASE("shape function") {
  const EnergyModel model(EnergyRegime::sub_log_energy(1.0), 20);
  Configuration eta;
  eta.add(2, 3);
  eta.add(5, 1);
  eta.add(9, 2);
  const ShapeFunction psi(eta, model);
  const double scale = model.n_beta() / 20.0;
  CHECK(psi(1e-9) == doctest::Approx(scale * 6.0));
  CHECK(psi.mass() == doctest::Approx(scale * 6.0));
  CHECK(psi(0.1) == doctest::Approx(scale * 6.0));           // ceil(2) = 2
  CHECK(psi(0.1 + 1e-9) == doctest::Approx(scale * 3.0));    // sites >= 3
  CHECK(psi(0.45) == doctest::Approx(scale * 2.0));
  CHECK(psi(9.0 / 20.0 + 1e-9) == 0.0);
  CHECK(psi(5.0) == 0.0);
  const ShapeFunction empty(Configuration{}, model);
  CHECK(empty(0.3) == 0.0);
  CHECK(empty.pair(basket()[0]) == 0.0);
}

TEST_CASE("summation by parts links shape and density pairings") {
  Rng rng(404);
  for (const auto& regime : default_regimes()) {
    for (std::int64_t n : {10, 100, 1000}) {
      const EnergyModel model(regime, n);
      for (int trial = 0; trial < 100; ++trial) {
        const auto eta = random_config(rng, static_cast<Site>(4 * n), 50);
        const ShapeFunction psi(eta, model);
        for (const auto& g : basket()) {
          const double by_parts = shape_pair_by_parts(eta, model, g);
          REQUIRE(std::abs(psi.pair(g) - by_parts) <= 1e-12 * std::max(1.0, std::abs(by_parts)));
        }
      }
    }
  }
}

TEST_CASE("shape pairing against cellwise quadrature") {
  Rng rng(405);
  const EnergyModel model(EnergyRegime::beta0(), 40);
  for (int trial = 0; trial < 20; ++trial) {
    const auto eta = random_config(rng, 150, 20);
    const ShapeFunction psi(eta, model);
    for (const auto& g : basket()) {
      double oracle = 0.0;
      for (Site k = 1; k <= eta.max_site(); ++k) {
        const double lo = static_cast<double>(k - 1) / 40.0, hi = static_cast<double>(k) / 40.0;
        const double mid = 0.5 * (lo + hi);
        oracle += psi(mid) * gk([&](double x) { return g.value(x); }, lo, hi);
      }
      CHECK(psi.pair(g) == doctest::Approx(oracle).epsilon(1e-11));
    }
  }
}

TEST_CASE("partitions and configurations") {
  const Partition p({4, 2, 2, 1});
  CHECK(p.size() == 9);
  CHECK(p.length() == 4);
  const auto xi = partition_to_config(p);
  CHECK(xi.at(1) == 1);
  CHECK(xi.at(2) == 2);
  CHECK(xi.at(3) == 0);
  CHECK(xi.at(4) == 1);
  CHECK(xi.at(5) == 0);
  CHECK(xi.total() == 4);
  CHECK(partition_size(xi) == 9);
  CHECK(config_to_partition(xi) == p);

  CHECK(partition_to_config(Partition{}).empty());
  CHECK(config_to_partition(Configuration{}).length() == 0);
  CHECK_THROWS_AS(Partition({1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Partition({3, 0}), std::invalid_argument);

  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const auto eta = random_config(rng, 60, 5);
    const auto q = config_to_partition(eta);
    CHECK(q.size() == partition_size(eta));
    CHECK(partition_to_config(q) == eta);
  }
}

TEST_CASE("martingale residual: empty window and error paths") {
  const EnergyModel model(EnergyRegime::beta0(), 30);
  Rng rng(1);
  Configuration eta;
  eta.add(12, 4);
  const std::vector<double> zero{0.0};
  RunOptions options;
  options.record_events = true;
  const auto frozen = run_until(eta, model, 0.0, zero, rng, options);
  const auto r = martingale_residual(frozen, model, basket()[0], zero);
  REQUIRE(r.size() == 1);
  CHECK(r[0] == 0.0);

  const auto unlogged = run_until(eta, model, 0.01, zero, rng);
  CHECK_THROWS_AS(martingale_residual(unlogged, model, basket()[0], zero), std::invalid_argument);
  const std::vector<double> late{0.5};
  CHECK_THROWS_AS(martingale_residual(frozen, model, basket()[0], late), std::invalid_argument);
}

TEST_CASE("martingale residual: offline replay equals online tracking") {
  for (const auto& regime : default_regimes()) {
    const EnergyModel model(regime, 60);
    Rng rng(2024);
    const auto initial = sample(invariant_measure(model, 0.5), rng);
    const std::vector<double> times{0.005, 0.01, 0.02};
    for (const auto& g : basket()) {
      MartingaleTracker tracker(model, g, initial);
      RunOptions options;
      options.record_events = true;
      options.observer = &tracker;
      Rng run_rng(7);
      const auto traj = run_until(initial, model, 0.02, times, run_rng, options);
      const auto offline = martingale_residual(traj, model, g, times);
      REQUIRE(tracker.marks().size() == times.size());
      for (std::size_t i = 0; i < times.size(); ++i) {
        CHECK(tracker.marks()[i].first == times[i]);
        CHECK(tracker.marks()[i].second == doctest::Approx(offline[i]).epsilon(1e-9).scale(1.0));
      }
      CHECK(tracker.pairing() == doctest::Approx(pair(traj.snapshots.back().config, model, g)).epsilon(1e-12));
    }
  }
}

TEST_CASE("martingale residual has mean zero") {
  const EnergyModel model(EnergyRegime::beta0(), 50);
  const auto measure = invariant_measure(model, 0.5);
  const std::vector<double> times{0.02};
  for (const auto& g : basket()) {
    RunningStats stats;
    for (std::uint64_t r = 0; r < 200; ++r) {
      Rng rng(derive_seed(5, "martingale-mean", 50, r));
      const auto initial = sample(measure, rng);
      MartingaleTracker tracker(model, g, initial);
      RunOptions options;
      options.observer = &tracker;
      run_until(initial, model, 0.02, times, rng, options);
      stats.add(tracker.marks().back().second);
    }
    CAPTURE(g.id());
    CHECK(std::abs(stats.mean()) <= 3.0 * stats.stderr_mean());
  }
}
