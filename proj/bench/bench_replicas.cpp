// Serial reference loop vs the OpenMP replica pool on the same replica task:
// short ZRP trajectories from the invariant measure.
#include "zrp/energy_model.hpp"
#include "zrp/gibbs_measures.hpp"
#include "zrp/observables.hpp"
#include "zrp/replicas.hpp"
#include "zrp/rng.hpp"
#include "zrp/simulator.hpp"

#include <benchmark/benchmark.h>

#include <omp.h>

#include <vector>

namespace {

constexpr std::size_t kReplicas = 32;

struct Task {
  zrp::EnergyModel model;
  zrp::ProductGeometric measure;
  zrp::TestFunction g;

  explicit Task(std::int64_t n)
      : model(zrp::EnergyRegime::sub_log_energy(1.0), n),
        measure(zrp::invariant_measure(model, 0.5)),
        g(zrp::test_function("g2")) {}

  double operator()(std::size_t r) const {
    zrp::Rng rng(zrp::derive_seed(1, "bench", static_cast<std::uint64_t>(model.n()), r));
    const auto eta = zrp::sample(measure, rng);
    const std::vector<double> times{0.01};
    const auto traj = zrp::run_until(eta, model, 0.01, times, rng);
    return zrp::pair(traj.snapshots.back().config, model, g);
  }
};

void BM_serial(benchmark::State& state) {
  const Task task(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(zrp::run_replicas_serial(kReplicas, task));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * kReplicas));
}

void BM_openmp(benchmark::State& state) {
  const Task task(state.range(0));
  const int workers = omp_get_max_threads();
  for (auto _ : state) benchmark::DoNotOptimize(zrp::run_replicas(kReplicas, workers, task));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * kReplicas));
  state.counters["workers"] = workers;
}

}  // namespace

BENCHMARK(BM_serial)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_openmp)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
