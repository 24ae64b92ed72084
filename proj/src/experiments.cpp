#include "zrp/experiments.hpp"

#include "zrp/block_analysis.hpp"
#include "zrp/gibbs_measures.hpp"
#include "zrp/observables.hpp"
#include "zrp/pde_solver.hpp"
#include "zrp/replicas.hpp"
#include "zrp/rng.hpp"
#include "zrp/simulator.hpp"
#include "zrp/stats.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

namespace zrp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

double se_or_zero(double se) { return std::isnan(se) ? 0.0 : se; }

std::vector<TestFunction> test_functions(const ExperimentConfig& config) {
  std::vector<TestFunction> out;
  for (const auto& id : config.test_functions) out.push_back(test_function(id));
  return out;
}

ResultRow context(const ExperimentConfig& config, std::int64_t n = 0, double t = kNaN) {
  ResultRow r;
  r.experiment = config.id;
  r.regime = std::string(to_string(config.regime));
  r.n = n;
  r.t = t;
  return r;
}

ResultRow stat_row(const ResultRow& ctx, std::string observable, const RunningStats& s, double target) {
  ResultRow r = ctx;
  r.observable = std::move(observable);
  r.value = s.mean();
  r.stderr_value = s.stderr_mean();
  r.replicas = s.count();
  r.target = target;
  r.deviation = std::abs(s.mean() - target);
  return r;
}

ResultRow value_row(const ResultRow& ctx, std::string observable, double value, double target = kNaN) {
  ResultRow r = ctx;
  r.observable = std::move(observable);
  r.value = value;
  r.target = target;
  if (!std::isnan(target)) r.deviation = std::abs(value - target);
  return r;
}

double integrate(const std::function<double(double)>& f, double a, double b) {
  if (!(b > a)) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13);
}

/// integral of G phi_c.
double phi_pairing(const EnergyModel& model, const TestFunction& g, double c, bool boundary) {
  return integrate([&](double x) { return g.value(x) * model.phi_c(x, c, boundary); }, g.a(), g.b());
}

/// integral of G psi_c = integral of g phi_c, g the antiderivative of G.
double phi_shape_pairing(const EnergyModel& model, const TestFunction& g, double c, bool boundary) {
  return integrate([&](double x) { return g.antiderivative(x) * model.phi_c(x, c, boundary); }, g.a(), g.b()) +
         g.integral() * model.phi_c_integral(g.b(), kInf, c, boundary);
}

double profile_pairing(const DensityProfile& profile, const TestFunction& g) {
  return integrate([&](double x) { return g.value(x) * profile(x); }, g.a(), g.b());
}

DensityProfile make_profile(const ExperimentConfig& config, const EnergyModel& model) {
  if (config.profile == "phi_c_half") return DensityProfile::phi(model, 0.5 * config.c_frac);
  if (config.profile == "phi_c") return DensityProfile::phi(model, config.c_frac, config.boundary);
  if (config.profile == "bump") return DensityProfile::bump(model, config.c_frac);
  if (config.profile == "zero") return DensityProfile::zero();
  if (config.profile.starts_with("table:")) return read_profile_table(config.profile.substr(6));
  throw std::invalid_argument("unknown profile " + config.profile);
}

ProductGeometric initial_measure(const ExperimentConfig& config, const EnergyModel& model) {
  if (config.initial == "invariant") return invariant_measure(model, config.c_frac, config.boundary);
  return local_equilibrium(model, make_profile(config, model), config.c_frac, 1e-2, config.boundary).measure;
}

/// Snapshot times with t = 0 prepended.
std::vector<double> with_origin(const std::vector<double>& times) {
  std::vector<double> out{0.0};
  for (double t : times)
    if (t > 0.0) out.push_back(t);
  return out;
}

/// Noise-aware nonincreasing trend plus a strict-trend information row.
bool trend_check(ResultTable& table, const ResultRow& ctx, const std::string& name, const std::vector<double>& devs,
                 const std::vector<double>& ses) {
  std::vector<double> se(ses.size());
  std::transform(ses.begin(), ses.end(), se.begin(), se_or_zero);
  table.add(value_row(ctx, "strict_trend:" + name, strictly_decreasing(devs) ? 1.0 : 0.0));
  return table.add_check(ctx, "trend:" + name, noise_aware_nonincreasing(devs, se));
}

// ---------------------------------------------------------------- static

}  // namespace

RunOutput static_experiment(const ExperimentConfig& config, int workers) {
  RunOutput out;
  const auto regime = config.energy_regime();
  const auto gs = test_functions(config);
  PlotData plot{config.id + "_pairings", {"N", "g", "mean", "stderr", "target"}, {}};
  std::vector<std::vector<double>> devs(gs.size()), ses(gs.size()), scales(gs.size());
  for (auto n : config.n_ladder) {
    const EnergyModel model(regime, n);
    const double c = config.c_frac * model.c0();
    const auto measure = initial_measure(config, model);
    const auto profile = make_profile(config, model);
    auto pairings = run_replicas(config.replicas, workers, [&](std::size_t r) {
      Rng rng(derive_seed(config.seed, config.id, static_cast<std::uint64_t>(n), r));
      const Configuration eta = sample(measure, rng);
      std::vector<double> v;
      for (const auto& g : gs) v.push_back(pair(eta, model, g));
      return v;
    });
    const auto ctx = context(config, n);
    for (std::size_t gi = 0; gi < gs.size(); ++gi) {
      RunningStats s;
      for (const auto& v : pairings) s.add(v[gi]);
      const double scale = config.c_frac == 0.0 ? 0.0 : phi_pairing(model, gs[gi], c, config.boundary);
      const double target = config.initial == "invariant" ? scale : profile_pairing(profile, gs[gi]);
      out.table.add(stat_row(ctx, "pairing:" + gs[gi].id(), s, target));
      devs[gi].push_back(std::abs(s.mean() - target));
      ses[gi].push_back(s.stderr_mean());
      scales[gi].push_back(scale);
      plot.rows.push_back({static_cast<double>(n), static_cast<double>(gi + 1), s.mean(), s.stderr_mean(), target});
    }
  }
  const auto last = context(config, config.n_ladder.back());
  for (std::size_t gi = 0; gi < gs.size(); ++gi) {
    const std::string id = gs[gi].id();
    trend_check(out.table, context(config), id, devs[gi], ses[gi]);
    const double bound = std::max(3.0 * se_or_zero(ses[gi].back()), config.statics.relative_tolerance * scales[gi].back());
    out.table.add_check(last, "final:" + id, devs[gi].back() <= bound, devs[gi].back(), bound);
  }
  out.plots.push_back(std::move(plot));
  return out;
}

// ---------------------------------------------------------------- hydro

namespace {

struct HydroReplica {
  std::vector<double> density;  // [t * G + g]
  std::vector<double> shape;
  bool conserved = true;
  bool shape_mass_constant = true;
  bool truncated = false;
  std::uint64_t events = 0;
};

struct PdeTargets {
  std::vector<double> density;  // [t * G + g]
  std::vector<double> shape;
};

/// 4-point Gauss-Legendre on [lo, hi].
template <class F>
double gauss4(F&& f, double lo, double hi) {
  static constexpr double nodes[] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                     0.8611363115940526};
  static constexpr double weights[] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                       0.3478548451374538};
  const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
  double s = 0.0;
  for (int i = 0; i < 4; ++i) s += weights[i] * f(mid + half * nodes[i]);
  return s * half;
}

PdeTargets pde_targets(const Solution& sol, const std::vector<TestFunction>& gs) {
  PdeTargets out;
  for (const auto& field : sol.snapshots) {
    const auto psi = integrate_shape(field);
    const Grid& grid = field.grid;
    for (const auto& g : gs) {
      const auto first = static_cast<std::size_t>(std::floor(g.a() / grid.dx));
      const auto stop = std::min(grid.cells, static_cast<std::size_t>(std::ceil(g.b() / grid.dx)) + 1);
      double dens = 0.0, shape = 0.0;
      for (std::size_t i = first; i < stop; ++i) {
        const double lo = grid.face(i), hi = grid.face(i + 1);
        dens += field.rho[i] * (g.antiderivative(hi) - g.antiderivative(lo));
        // psi is linear across a cell.
        shape += gauss4([&](double x) { return g.value(x) * (psi[i] + (psi[i + 1] - psi[i]) * (x - lo) / grid.dx); },
                        lo, hi);
      }
      out.density.push_back(dens);
      out.shape.push_back(shape);
    }
  }
  return out;
}

HydroReplica replica_pairings(const ExperimentConfig& config, const EnergyModel& model,
                              const ProductGeometric& measure, const std::vector<TestFunction>& gs,
                              const std::vector<double>& times, std::size_t r) {
  Rng rng(derive_seed(config.seed, config.id, static_cast<std::uint64_t>(model.n()), r));
  const Configuration eta0 = sample(measure, rng);
  RunOptions opts;
  opts.event_cap = config.event_cap;
  const Trajectory traj = run_until(eta0, model, times.back(), times, rng, opts);
  HydroReplica out;
  out.truncated = traj.truncated;
  out.events = traj.event_count;
  const double mass0 = ShapeFunction(eta0, model).mass();
  out.density.assign(times.size() * gs.size(), kNaN);
  out.shape.assign(times.size() * gs.size(), kNaN);
  for (std::size_t ti = 0; ti < traj.snapshots.size(); ++ti) {
    const Configuration& eta = traj.snapshots[ti].config;
    out.conserved = out.conserved && eta.total() == eta0.total() && eta.consistent();
    const ShapeFunction shape(eta, model);
    out.shape_mass_constant = out.shape_mass_constant && shape.mass() == mass0;
    for (std::size_t gi = 0; gi < gs.size(); ++gi) {
      out.density[ti * gs.size() + gi] = pair(eta, model, gs[gi]);
      out.shape[ti * gs.size() + gi] = shape.pair(gs[gi]);
    }
  }
  return out;
}

void add_conservation_checks(ResultTable& table, const ResultRow& ctx, bool conserved, std::uint64_t truncated) {
  table.add_check(ctx, "conservation", conserved);
  table.add_check(ctx, "event_budget", truncated == 0, static_cast<double>(truncated), 0.0);
}

void hydro_convergence(const ExperimentConfig& config, int workers, RunOutput& out) {
  const auto regime = config.energy_regime();
  const auto gs = test_functions(config);
  const auto times = with_origin(config.t_macro);
  const std::size_t nt = times.size(), ng = gs.size();

  // PDE reference on the model at the largest N (phi_c does not depend on N).
  const EnergyModel ref_model(regime, config.n_ladder.back());
  const double c = config.c_frac * ref_model.c0();
  const auto profile = make_profile(config, ref_model);
  const Field init = sample_profile(profile, Grid::uniform(config.pde.length, config.pde.dx), Sampling::CellAverage);
  SolveOptions opts;
  opts.c_bound = c;
  opts.boundary = config.boundary;
  const auto sol = solve(init, FluxModel::for_model(ref_model), times, opts, &ref_model);
  const auto targets = pde_targets(sol, gs);
  std::optional<PdeTargets> wrong;
  if (config.hydro.falsify) {
    const auto bad = solve(init, FluxModel::for_model(ref_model, -1.0), times, SolveOptions{});
    wrong = pde_targets(bad, gs);
  }
  std::vector<double> density_scale, shape_scale;
  for (const auto& g : gs) {
    density_scale.push_back(phi_pairing(ref_model, g, c, config.boundary));
    shape_scale.push_back(phi_shape_pairing(ref_model, g, c, config.boundary));
  }

  // [t * G + g][N index]
  std::vector<std::vector<double>> dd(nt * ng), ds(nt * ng), sd(nt * ng), ss(nt * ng), fd(nt * ng);
  bool conserved = true, shape_constant = true;
  std::uint64_t truncated = 0;
  PlotData plot{config.id + "_hydro", {"N", "t", "g", "density", "density_se", "density_pde", "shape", "shape_se",
                                       "shape_pde"}, {}};
  for (auto n : config.n_ladder) {
    const EnergyModel model(regime, n);
    const auto measure = initial_measure(config, model);
    const auto reps = run_replicas(config.replicas, workers, [&](std::size_t r) {
      return replica_pairings(config, model, measure, gs, times, r);
    });
    std::uint64_t events = 0, trunc_n = 0;
    for (const auto& rep : reps) {
      conserved = conserved && rep.conserved;
      shape_constant = shape_constant && rep.shape_mass_constant;
      trunc_n += rep.truncated ? 1 : 0;
      events += rep.events;
    }
    truncated += trunc_n;
    out.table.add(value_row(context(config, n), "events", static_cast<double>(events)));
    for (std::size_t ti = 0; ti < nt; ++ti) {
      auto ctx = context(config, n, times[ti]);
      if (trunc_n > 0) ctx.flag = "TRUNCATED";
      for (std::size_t gi = 0; gi < ng; ++gi) {
        const std::size_t idx = ti * ng + gi;
        RunningStats dens, shape;
        for (const auto& rep : reps) {
          if (std::isnan(rep.density[idx])) continue;
          dens.add(rep.density[idx]);
          shape.add(rep.shape[idx]);
        }
        out.table.add(stat_row(ctx, "density:" + gs[gi].id(), dens, targets.density[idx]));
        out.table.add(stat_row(ctx, "shape:" + gs[gi].id(), shape, targets.shape[idx]));
        dd[idx].push_back(std::abs(dens.mean() - targets.density[idx]));
        ds[idx].push_back(dens.stderr_mean());
        sd[idx].push_back(std::abs(shape.mean() - targets.shape[idx]));
        ss[idx].push_back(shape.stderr_mean());
        if (wrong) {
          out.table.add(stat_row(ctx, "falsified_density:" + gs[gi].id(), dens, wrong->density[idx]));
          fd[idx].push_back(std::abs(dens.mean() - wrong->density[idx]));
        }
        plot.rows.push_back({static_cast<double>(n), times[ti], static_cast<double>(gi + 1), dens.mean(),
                             dens.stderr_mean(), targets.density[idx], shape.mean(), shape.stderr_mean(),
                             targets.shape[idx]});
      }
    }
  }

  std::size_t falsified_failures = 0;
  for (std::size_t ti = 1; ti < nt; ++ti) {
    const auto ctx = context(config, 0, times[ti]);
    const auto last = context(config, config.n_ladder.back(), times[ti]);
    for (std::size_t gi = 0; gi < ng; ++gi) {
      const std::size_t idx = ti * ng + gi;
      const std::string id = gs[gi].id();
      trend_check(out.table, ctx, "density:" + id, dd[idx], ds[idx]);
      const double dbound = config.hydro.tolerance * density_scale[gi];
      out.table.add_check(last, "final:density:" + id, dd[idx].back() <= dbound, dd[idx].back(), dbound);
      trend_check(out.table, ctx, "shape:" + id, sd[idx], ss[idx]);
      const double sbound = config.hydro.tolerance * shape_scale[gi];
      out.table.add_check(last, "final:shape:" + id, sd[idx].back() <= sbound, sd[idx].back(), sbound);
      if (wrong) {
        std::vector<double> se(ds[idx].size());
        std::transform(ds[idx].begin(), ds[idx].end(), se.begin(), se_or_zero);
        const bool ok = noise_aware_nonincreasing(fd[idx], se) && fd[idx].back() <= dbound;
        falsified_failures += ok ? 0 : 1;
      }
    }
  }
  const auto ctx = context(config);
  add_conservation_checks(out.table, ctx, conserved, truncated);
  out.table.add_check(ctx, "shape_mass_constant", shape_constant);
  out.table.add(value_row(ctx, "pde_mass_drift", sol.max_mass_drift));
  if (wrong)
    out.table.add_check(ctx, "falsification", falsified_failures > 0, static_cast<double>(falsified_failures), 1.0);
  out.plots.push_back(std::move(plot));
}

void hydro_stationarity(const ExperimentConfig& config, int workers, RunOutput& out) {
  const auto regime = config.energy_regime();
  const auto gs = test_functions(config);
  const std::vector<double> times{0.0, config.t_macro.back()};
  bool conserved = true;
  std::uint64_t truncated = 0;
  for (auto n : config.n_ladder) {
    const EnergyModel model(regime, n);
    const double c = config.c_frac * model.c0();
    const auto measure = initial_measure(config, model);
    const auto reps = run_replicas(config.replicas, workers, [&](std::size_t r) {
      return replica_pairings(config, model, measure, gs, times, r);
    });
    for (const auto& rep : reps) {
      conserved = conserved && rep.conserved;
      truncated += rep.truncated ? 1 : 0;
    }
    for (std::size_t gi = 0; gi < gs.size(); ++gi) {
      std::vector<double> start, end;
      for (const auto& rep : reps) {
        start.push_back(rep.density[gi]);
        if (!std::isnan(rep.density[gs.size() + gi])) end.push_back(rep.density[gs.size() + gi]);
      }
      const double target = config.initial == "invariant" ? phi_pairing(model, gs[gi], c, config.boundary) : kNaN;
      for (std::size_t ti = 0; ti < 2; ++ti) {
        RunningStats s;
        for (double v : ti == 0 ? start : end) s.add(v);
        out.table.add(stat_row(context(config, n, times[ti]), "pairing:" + gs[gi].id(), s, target));
      }
      const auto ks = ks_two_sample(start, end);
      const auto ctx = context(config, n, times[1]);
      out.table.add(value_row(ctx, "ks_statistic:" + gs[gi].id(), ks.statistic));
      out.table.add_check(ctx, "ks:" + gs[gi].id(), ks.p_value >= config.hydro.ks_alpha, ks.p_value,
                          config.hydro.ks_alpha);
    }
  }
  add_conservation_checks(out.table, context(config), conserved, truncated);
}

/// Forwards simulator callbacks to several trackers.
class TrackerFan final : public SimObserver {
 public:
  explicit TrackerFan(std::vector<MartingaleTracker>& trackers) : trackers_(trackers) {}
  void advance(double dt) override {
    for (auto& t : trackers_) t.advance(dt);
  }
  void moved(Site from, Site to, const ZrpSimulator& sim) override {
    for (auto& t : trackers_) t.moved(from, to, sim);
  }
  void mark(double t_macro) override {
    for (auto& t : trackers_) t.mark(t_macro);
  }

 private:
  std::vector<MartingaleTracker>& trackers_;
};

struct MartingaleReplica {
  std::vector<double> residual;  // per G
  bool conserved = true;
  bool truncated = false;
};

void hydro_martingale(const ExperimentConfig& config, int workers, RunOutput& out) {
  const auto regime = config.energy_regime();
  const auto gs = test_functions(config);
  const double horizon = config.t_macro.back();
  const std::vector<double> times{horizon};
  std::vector<double> log_scale;
  std::vector<std::vector<double>> log_var(gs.size());
  bool conserved = true;
  std::uint64_t truncated = 0;
  PlotData plot{config.id + "_martingale", {"N", "scale", "g", "var", "mean", "mean_se"}, {}};
  for (auto n : config.n_ladder) {
    const EnergyModel model(regime, n);
    const auto measure = initial_measure(config, model);
    const auto reps = run_replicas(config.replicas, workers, [&](std::size_t r) {
      Rng rng(derive_seed(config.seed, config.id, static_cast<std::uint64_t>(n), r));
      const Configuration eta0 = sample(measure, rng);
      std::vector<MartingaleTracker> trackers;
      for (const auto& g : gs) trackers.emplace_back(model, g, eta0);
      TrackerFan fan(trackers);
      RunOptions opts;
      opts.event_cap = config.event_cap;
      opts.observer = &fan;
      const Trajectory traj = run_until(eta0, model, horizon, times, rng, opts);
      MartingaleReplica rep;
      rep.truncated = traj.truncated;
      rep.conserved = traj.snapshots.empty() || traj.snapshots.back().config.total() == eta0.total();
      for (const auto& t : trackers) rep.residual.push_back(t.marks().empty() ? kNaN : t.marks().back().second);
      return rep;
    });
    const double scale = model.n_beta() / static_cast<double>(n);
    log_scale.push_back(std::log(scale));
    for (const auto& rep : reps) {
      conserved = conserved && rep.conserved;
      truncated += rep.truncated ? 1 : 0;
    }
    const auto ctx = context(config, n, horizon);
    for (std::size_t gi = 0; gi < gs.size(); ++gi) {
      RunningStats s;
      for (const auto& rep : reps)
        if (!std::isnan(rep.residual[gi])) s.add(rep.residual[gi]);
      out.table.add(stat_row(ctx, "residual_mean:" + gs[gi].id(), s, 0.0));
      out.table.add(value_row(ctx, "residual_var:" + gs[gi].id(), s.variance()));
      log_var[gi].push_back(std::log(s.variance()));
      plot.rows.push_back({static_cast<double>(n), scale, static_cast<double>(gi + 1), s.variance(), s.mean(),
                           s.stderr_mean()});
    }
  }
  const auto ctx = context(config, 0, horizon);
  for (std::size_t gi = 0; gi < gs.size(); ++gi) {
    const auto fit = linear_fit(log_scale, log_var[gi]);
    const std::string id = gs[gi].id();
    out.table.add(value_row(ctx, "var_slope:" + id, fit.slope));
    out.table.add(value_row(ctx, "var_r_squared:" + id, fit.r_squared));
    out.table.add_check(ctx, "slope:" + id, fit.slope >= config.hydro.slope_lo && fit.slope <= config.hydro.slope_hi,
                        fit.slope);
    out.table.add_check(ctx, "r_squared:" + id, fit.r_squared >= config.hydro.min_r_squared, fit.r_squared,
                        config.hydro.min_r_squared);
  }
  add_conservation_checks(out.table, context(config), conserved, truncated);
  out.plots.push_back(std::move(plot));
}

struct CoupledReplica {
  std::uint64_t violations = 0;
  bool ordered_at_end = true;
  bool conserved = true;
  bool truncated = false;
  std::vector<double> coupled;      // lower-chain pairings at the horizon
  std::vector<double> independent;  // same initial lower state, own clocks
};

Configuration thin(const Configuration& eta, double keep, Rng& rng) {
  Configuration out;
  for (const auto& [site, count] : eta) {
    Count kept = 0;
    for (Count i = 0; i < count; ++i) kept += rng.uniform() < keep ? 1 : 0;
    if (kept) out.set(site, kept);
  }
  return out;
}

void hydro_coupled(const ExperimentConfig& config, int workers, RunOutput& out) {
  const auto regime = config.energy_regime();
  const auto gs = test_functions(config);
  const double horizon = config.t_macro.back();
  const std::vector<double> times{horizon};
  const auto reps = run_replicas(config.hydro.pairs, workers, [&](std::size_t p) {
    const auto n = config.n_ladder[p % config.n_ladder.size()];
    const EnergyModel model(regime, n);
    Rng rng(derive_seed(config.seed, config.id, static_cast<std::uint64_t>(n), p));
    // Fuzzed pair: density level, thinning fraction, with the extremes 0 and 1 included.
    const double c_frac = 0.05 + 0.9 * rng.uniform();
    const double u = rng.uniform();
    const double keep = u < 0.1 ? 0.0 : u < 0.2 ? 1.0 : rng.uniform();
    const Configuration upper = sample(invariant_measure(model, c_frac), rng);
    const Configuration lower = thin(upper, keep, rng);
    RunOptions opts;
    opts.event_cap = config.event_cap;
    const auto coupled = run_coupled(lower, upper, model, horizon, times, rng, opts);
    Rng own(derive_seed(config.seed, config.id + "/independent", static_cast<std::uint64_t>(n), p));
    const auto alone = run_until(lower, model, horizon, times, own, opts);
    CoupledReplica rep;
    rep.violations = coupled.order_violations;
    rep.truncated = coupled.upper.truncated || alone.truncated;
    if (!coupled.lower.snapshots.empty() && !coupled.upper.snapshots.empty()) {
      const auto& lo = coupled.lower.snapshots.back().config;
      const auto& up = coupled.upper.snapshots.back().config;
      rep.ordered_at_end = lo.dominated_by(up);
      rep.conserved = lo.total() == lower.total() && up.total() == upper.total();
      for (const auto& g : gs) rep.coupled.push_back(pair(lo, model, g));
    }
    if (!alone.snapshots.empty()) {
      rep.conserved = rep.conserved && alone.snapshots.back().config.total() == lower.total();
      for (const auto& g : gs) rep.independent.push_back(pair(alone.snapshots.back().config, model, g));
    }
    return rep;
  });
  std::uint64_t violations = 0, truncated = 0;
  bool ordered = true, conserved = true;
  for (const auto& rep : reps) {
    violations += rep.violations;
    ordered = ordered && rep.ordered_at_end;
    conserved = conserved && rep.conserved;
    truncated += rep.truncated ? 1 : 0;
  }
  const auto ctx = context(config, 0, horizon);
  out.table.add(value_row(ctx, "pairs", static_cast<double>(reps.size())));
  out.table.add_check(ctx, "order_violations", violations == 0, static_cast<double>(violations), 0.0);
  out.table.add_check(ctx, "ordered_at_end", ordered);
  add_conservation_checks(out.table, context(config), conserved, truncated);
  for (std::size_t gi = 0; gi < gs.size(); ++gi) {
    std::vector<double> a, b;
    for (const auto& rep : reps) {
      if (gi < rep.coupled.size()) a.push_back(rep.coupled[gi]);
      if (gi < rep.independent.size()) b.push_back(rep.independent[gi]);
    }
    if (a.empty() || b.empty()) continue;
    const auto ks = ks_two_sample(a, b);
    out.table.add_check(ctx, "lower_marginal_ks:" + gs[gi].id(), ks.p_value >= config.hydro.ks_alpha, ks.p_value,
                        config.hydro.ks_alpha);
  }
}

}  // namespace

RunOutput hydro_experiment(const ExperimentConfig& config, int workers) {
  RunOutput out;
  const auto& mode = config.hydro.mode;
  if (mode == "convergence") hydro_convergence(config, workers, out);
  else if (mode == "stationarity") hydro_stationarity(config, workers, out);
  else if (mode == "martingale") hydro_martingale(config, workers, out);
  else if (mode == "coupled") hydro_coupled(config, workers, out);
  else throw std::invalid_argument("unknown hydro mode " + mode);
  return out;
}

// ---------------------------------------------------------------- blocks

namespace {

std::string block_name(const char* kind, std::int64_t l, std::int64_t j, std::int64_t offset = 0) {
  std::string s = std::string(kind) + ":l" + std::to_string(l) + ":j" + std::to_string(j);
  if (offset > 0) s += ":d" + std::to_string(offset);
  return s;
}

struct SandwichJob {
  BlockSpec spec;
  std::int64_t n;
  std::int64_t offset;  // 0 for one block
};

}  // namespace

RunOutput blocks_experiment(const ExperimentConfig& config, int workers) {
  RunOutput out;
  const auto regime = config.energy_regime();
  const auto& b = config.blocks;
  const bool two_blocks = config.regime == Regime::Beta0;
  auto center = [&](std::int64_t n) {
    return static_cast<std::int64_t>(std::floor(b.center_frac * static_cast<double>(n)));
  };

  std::vector<SandwichJob> jobs;
  for (auto l : b.half_widths)
    for (auto j : b.particles)
      for (auto n : config.n_ladder) {
        BlockSpec spec{center(n), l, j, std::nullopt, config.c_frac};
        jobs.push_back({spec, n, 0});
        if (!two_blocks) continue;
        for (auto off : b.two_block_offsets) {
          const auto d = off == 0 ? 2 * l + 1 : off;
          spec.k2 = spec.k + d;
          jobs.push_back({spec, n, d});
        }
      }
  const auto sandwiches = run_replicas(jobs.size(), workers, [&](std::size_t i) {
    return ratio_sandwich(jobs[i].spec, EnergyModel(regime, jobs[i].n));
  });
  // r-bound per (kind, l, j, offset) along the ladder.
  std::map<std::string, std::vector<double>> ladders;
  PlotData plot{config.id + "_sandwich", {"N", "l", "j", "offset", "states", "min_ratio", "max_ratio", "r_bound"}, {}};
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& job = jobs[i];
    const auto& s = sandwiches[i];
    const std::string name = block_name(job.offset ? "two" : "one", job.spec.l, job.spec.j, job.offset);
    const auto ctx = context(config, job.n);
    out.table.add(value_row(ctx, "max_ratio:" + name, s.max_ratio, s.r_bound));
    out.table.add(value_row(ctx, "min_ratio:" + name, s.min_ratio, 1.0 / s.r_bound));
    out.table.add(value_row(ctx, "states:" + name, static_cast<double>(s.states)));
    out.table.add_check(ctx, "sandwich:" + name, s.holds(), s.max_ratio, s.r_bound);
    ladders[name].push_back(s.r_bound);
    plot.rows.push_back({static_cast<double>(job.n), static_cast<double>(job.spec.l), static_cast<double>(job.spec.j),
                         static_cast<double>(job.offset), static_cast<double>(s.states), s.min_ratio, s.max_ratio,
                         s.r_bound});
  }
  for (const auto& [name, rs] : ladders) {
    const bool toward_one = strictly_decreasing(rs) && std::all_of(rs.begin(), rs.end(), [](double r) { return r >= 1.0; });
    out.table.add_check(context(config), "r_ladder:" + name, toward_one, rs.back());
  }
  out.plots.push_back(std::move(plot));

  if (!b.gap_half_widths.empty()) {
    const EnergyModel model(regime, b.gap_n);
    const auto gaps = run_replicas(b.gap_half_widths.size(), workers, [&](std::size_t i) {
      return spectral_gap(BlockSpec{center(b.gap_n), b.gap_half_widths[i], b.gap_particles, std::nullopt, config.c_frac}, model);
    });
    std::vector<double> log_width, log_width_j, log_gap;
    PlotData gp{config.id + "_gap", {"l", "width", "gap", "gap_times_width2"}, {}};
    double lo = kInf, hi = 0.0;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
      const double width = static_cast<double>(2 * b.gap_half_widths[i] + 1);
      const auto ctx = context(config, b.gap_n);
      out.table.add(value_row(ctx, "gap:l" + std::to_string(b.gap_half_widths[i]) + ":j" +
                                       std::to_string(b.gap_particles), gaps[i]));
      out.table.add_check(ctx, "gap_positive:l" + std::to_string(b.gap_half_widths[i]), gaps[i] > 0.0, gaps[i]);
      log_width.push_back(std::log(width));
      log_width_j.push_back(std::log(width + static_cast<double>(b.gap_particles)));
      log_gap.push_back(std::log(gaps[i]));
      lo = std::min(lo, gaps[i] * width * width);
      hi = std::max(hi, gaps[i] * width * width);
      gp.rows.push_back({static_cast<double>(b.gap_half_widths[i]), width, gaps[i], gaps[i] * width * width});
    }
    const auto ctx = context(config, b.gap_n);
    const auto fit = linear_fit(log_width, log_gap);
    const auto fit_j = linear_fit(log_width_j, log_gap);
    out.table.add(value_row(ctx, "gap_slope_width", fit.slope));
    out.table.add(value_row(ctx, "gap_slope_width_plus_j", fit_j.slope));
    out.table.add(value_row(ctx, "gap_width2_spread", hi / lo));
    out.table.add_check(ctx, "gap_slope", fit.slope >= b.slope_lo && fit.slope <= b.slope_hi, fit.slope);
    out.plots.push_back(std::move(gp));

    if (two_blocks) {
      const auto l = b.compare_half_width;
      BlockSpec spec{center(b.gap_n), l, b.compare_particles, center(b.gap_n) + 2 * l + 1, config.c_frac};
      const double joined = spectral_gap(spec, model);
      const double interval = spectral_gap(interval_chain(model, spec.k - l, static_cast<std::size_t>(4 * l + 2),
                                                          static_cast<std::uint32_t>(b.compare_particles)));
      const double ratio = joined / interval;
      out.table.add(value_row(ctx, "two_block_gap", joined));
      out.table.add(value_row(ctx, "interval_gap", interval));
      out.table.add_check(ctx, "two_block_gap_ratio", ratio >= b.compare_lo && ratio <= b.compare_hi, ratio);
    }
  }

  if (two_blocks && !b.ladder_offsets.empty()) {
    for (auto off : b.ladder_offsets) {
      std::vector<double> rs;
      for (auto n : config.n_ladder) {
        const EnergyModel model(regime, n);
        BlockSpec spec{center(n), b.ladder_half_width, b.ladder_particles, center(n) + off, config.c_frac};
        const double r = ratio_bound(spec, model);
        rs.push_back(r);
        out.table.add(value_row(context(config, n), block_name("offset_ladder", spec.l, spec.j, off), r));
      }
      out.table.add_check(context(config), block_name("offset_ladder", b.ladder_half_width, b.ladder_particles, off),
                          strictly_decreasing(rs), rs.back());
    }
  }
  return out;
}

// ---------------------------------------------------------------- pde

RunOutput pde_experiment(const ExperimentConfig& config) {
  RunOutput out;
  const auto& p = config.pde;
  const auto regime = config.energy_regime();
  const EnergyModel model(regime, config.n_ladder.empty() ? 1000 : config.n_ladder.back());
  const FluxModel flux = FluxModel::for_model(model);
  const double horizon = config.t_macro.back();
  const auto ctx = context(config);

  {
    const Grid grid = Grid::uniform(p.length, p.dx);
    Field f = sample_profile(DensityProfile::phi(model, config.c_frac, config.boundary), grid, Sampling::PointValue);
    const Field before = f;
    const FvScheme scheme(flux, grid);
    scheme.step(f, scheme.max_stable_dt());
    double residual = 0.0;
    for (std::size_t i = 0; i < f.rho.size(); ++i) residual = std::max(residual, std::abs(f.rho[i] - before.rho[i]));
    out.table.add_check(ctx, "stationarity", residual <= p.stationarity_tol, residual, p.stationarity_tol);
  }

  const auto bump = DensityProfile::bump(model, config.c_frac);
  {
    const Grid grid = Grid::uniform(p.length, p.mass_dx);
    Field f = sample_profile(bump, grid, Sampling::CellAverage);
    const double m0 = f.mass();
    const FvScheme scheme(flux, grid);
    for (std::size_t s = 0; s < p.mass_steps; ++s) scheme.step(f, scheme.max_stable_dt());
    const double drift = std::abs(f.mass() - m0) / m0;
    out.table.add(value_row(ctx, "mass_steps", static_cast<double>(p.mass_steps)));
    out.table.add_check(ctx, "mass_drift", drift <= p.mass_tol, drift, p.mass_tol);
  }

  {
    const auto study = refinement_study(bump, flux, p.length, p.refine_dx0, p.refine_levels, horizon);
    bool ok = true;
    PlotData plot{config.id + "_refinement", {"dx", "difference", "order"}, {}};
    for (std::size_t i = 0; i < study.differences.size(); ++i) {
      const double order = i < study.orders.size() ? study.orders[i] : kNaN;
      plot.rows.push_back({study.dx[i], study.differences[i], order});
    }
    for (std::size_t i = 0; i < study.orders.size(); ++i) {
      out.table.add(value_row(ctx, "order:" + std::to_string(i + 1), study.orders[i]));
      ok = ok && study.orders[i] >= p.order_lo && study.orders[i] <= p.order_hi;
    }
    out.table.add_check(ctx, "refinement_order", ok, study.orders.back());
    out.plots.push_back(std::move(plot));
  }

  const Grid grid = Grid::uniform(p.length, p.dx);
  const std::vector<double> times{horizon};

  if (config.regime == Regime::SubLogEnergy) {
    const double x0 = p.gauss_center, s0 = p.gauss_width;
    const DensityProfile gauss(
        "gauss",
        [=](double x) { return std::exp(-0.5 * (x - x0) * (x - x0) / (s0 * s0)) / (s0 * std::sqrt(2.0 * std::numbers::pi)); },
        [=](double a, double b) {
          const double r = s0 * std::sqrt(2.0);
          const double hi = std::isinf(b) ? 1.0 : std::erf((b - x0) / r);
          return 0.5 * (hi - std::erf((a - x0) / r));
        });
    const auto sol = solve(sample_profile(gauss, grid, Sampling::CellAverage), flux, times);
    const auto& f = sol.snapshots.back();
    double m = 0.0, m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < f.rho.size(); ++i) {
      const double x = grid.center(i);
      m += f.rho[i];
      m1 += f.rho[i] * x;
      m2 += f.rho[i] * x * x;
    }
    const double mean = m1 / m;
    const double var = m2 / m - mean * mean;
    const double mean_target = x0 - horizon, var_target = s0 * s0 + 2.0 * horizon;
    const auto tctx = context(config, 0, horizon);
    out.table.add(value_row(tctx, "gauss_mean", mean, mean_target));
    out.table.add(value_row(tctx, "gauss_variance", var, var_target));
    const double em = std::abs(mean - mean_target) / mean_target;
    const double ev = std::abs(var - var_target) / var_target;
    out.table.add_check(tctx, "gauss_mean", em <= p.moment_tol, em, p.moment_tol);
    out.table.add_check(tctx, "gauss_variance", ev <= p.moment_tol, ev, p.moment_tol);
  }

  const Field init = sample_profile(bump, grid, Sampling::CellAverage);
  const auto sol = solve(init, flux, times);
  const auto& final_field = sol.snapshots.back();
  const auto psi = integrate_shape(final_field);
  {
    PlotData rho_plot{config.id + "_rho", {"t", "x", "rho"}, {}};
    PlotData psi_plot{config.id + "_psi", {"t", "x", "psi"}, {}};
    for (const Field* f : {&init, &final_field}) {
      const auto ps = integrate_shape(*f);
      for (std::size_t i = 0; i < f->rho.size(); ++i) rho_plot.rows.push_back({f->t, grid.center(i), f->rho[i]});
      for (std::size_t i = 0; i < ps.size(); ++i) psi_plot.rows.push_back({f->t, grid.face(i), ps[i]});
    }
    out.plots.push_back(std::move(rho_plot));
    out.plots.push_back(std::move(psi_plot));
  }

  if (config.regime != Regime::Beta0) {
    std::vector<double> psi0(grid.cells + 1);
    for (std::size_t i = 0; i <= grid.cells; ++i) psi0[i] = bump.integral(grid.face(i), kInf);
    const auto cn = solve_shape_equation(psi0, grid.dx, flux, horizon, 0.1 * grid.dx);
    double sup = 0.0;
    for (std::size_t i = 0; i <= grid.cells; ++i) {
      const double x = grid.face(i);
      if (x >= p.shape_lo - 1e-12 && x <= p.shape_hi + 1e-12) sup = std::max(sup, std::abs(cn[i] - psi[i]));
    }
    out.table.add_check(context(config, 0, horizon), "shape_cross_solver", sup <= p.shape_tol, sup, p.shape_tol);
  }

  {
    std::vector<double> grid_times;
    for (int i = 1; i <= 10; ++i) grid_times.push_back(horizon * i / 10.0);
    Field lower = init;
    for (double& r : lower.rho) r *= 0.5;
    const auto a = solve(lower, flux, grid_times);
    const auto b = solve(init, flux, grid_times);
    double worst = -kInf;
    for (std::size_t s = 0; s < grid_times.size(); ++s)
      for (std::size_t i = 0; i < grid.cells; ++i)
        worst = std::max(worst, a.snapshots[s].rho[i] - b.snapshots[s].rho[i]);
    out.table.add_check(ctx, "comparison", worst <= p.comparison_tol, worst, p.comparison_tol);
  }
  return out;
}

// ---------------------------------------------------------------- sample

RunOutput sample_experiment(const ExperimentConfig& config) {
  RunOutput out;
  const auto n = config.n_ladder.front();
  const EnergyModel model(config.energy_regime(), n);
  const auto measure = initial_measure(config, model);
  Rng rng(derive_seed(config.seed, config.id, static_cast<std::uint64_t>(n), 0));
  const Configuration eta0 = sample(measure, rng);
  RunOptions opts;
  opts.event_cap = config.event_cap;
  opts.record_events = true;
  const Trajectory traj = run_until(eta0, model, config.t_macro.back(), config.t_macro, rng, opts);
  std::ostringstream text;
  write_trajectory(text, traj);
  std::istringstream in(text.str());
  const Trajectory back = read_trajectory(in);
  bool same = back.n == traj.n && back.initial == traj.initial && back.snapshots.size() == traj.snapshots.size() &&
              back.event_count == traj.event_count && back.truncated == traj.truncated;
  for (std::size_t i = 0; same && i < traj.snapshots.size(); ++i)
    same = back.snapshots[i].t_macro == traj.snapshots[i].t_macro && back.snapshots[i].config == traj.snapshots[i].config;
  bool conserved = true;
  for (const auto& s : traj.snapshots) conserved = conserved && s.config.total() == eta0.total();
  const auto ctx = context(config, n);
  out.table.add(value_row(ctx, "particles", static_cast<double>(eta0.total())));
  out.table.add(value_row(ctx, "events", static_cast<double>(traj.event_count)));
  out.table.add_check(ctx, "round_trip", same);
  add_conservation_checks(out.table, ctx, conserved, traj.truncated ? 1 : 0);
  out.files.emplace_back("trajectory.txt", text.str());
  return out;
}

// ---------------------------------------------------------------- moments

RunOutput moments_experiment(const ExperimentConfig& config) {
  RunOutput out;
  const auto regime = config.energy_regime();
  std::vector<double> entropy, variance;
  PlotData plot{config.id + "_moments", {"N", "entropy_scaled", "mean_scaled", "variance_scaled"}, {}};
  for (auto n : config.n_ladder) {
    const EnergyModel model(regime, n);
    const auto ref = invariant_measure(model, config.c_frac, config.boundary);
    const auto mu = local_equilibrium(model, make_profile(config, model), config.c_frac, 1e-2, config.boundary);
    const double scale = model.n_beta() / static_cast<double>(n);
    const double h = relative_entropy(mu.measure, ref) * scale;
    const auto m = total_moments(ref);
    const double mean = m.mean_total * scale;
    const double var = m.var_total * scale * scale;
    const auto ctx = context(config, n);
    out.table.add(value_row(ctx, "entropy_scaled", h));
    out.table.add(value_row(ctx, "mean_scaled", mean));
    out.table.add(value_row(ctx, "variance_scaled", var));
    out.table.add(value_row(ctx, "mean_matching_error", mu.mean_matching_error));
    entropy.push_back(h);
    variance.push_back(var);
    plot.rows.push_back({static_cast<double>(n), h, mean, var});
  }
  const auto ctx = context(config);
  const double entropy_max = *std::max_element(entropy.begin(), entropy.end());
  out.table.add_check(ctx, "entropy_bounded", entropy_max <= config.moments.entropy_slack * entropy.front(),
                      entropy_max / entropy.front(), config.moments.entropy_slack);
  out.table.add_check(ctx, "variance_decreasing", strictly_decreasing(variance), variance.back());

  const auto series = boundary_divergence(regime, config.moments.boundary_ladder);
  std::vector<double> means;
  for (const auto& pt : series) {
    out.table.add(value_row(context(config, pt.n), "boundary_mean_scaled", pt.scaled_mean));
    out.table.add(value_row(context(config, pt.n), "boundary_variance_scaled", pt.scaled_var));
    means.push_back(pt.scaled_mean);
  }
  out.table.add_check(ctx, "boundary_mean_increasing", strictly_increasing(means));
  const double ratio = means.back() / means.front();
  out.table.add_check(ctx, "boundary_mean_ratio", ratio >= config.moments.boundary_ratio, ratio,
                      config.moments.boundary_ratio);
  out.plots.push_back(std::move(plot));
  return out;
}

}  // namespace zrp
