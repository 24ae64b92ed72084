#include "zrp/pde_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace zrp {

FluxModel FluxModel::for_model(const EnergyModel& model, double drift_sign) {
  if (drift_sign != 1.0 && drift_sign != -1.0) throw std::invalid_argument("drift_sign must be +1 or -1");
  return FluxModel{model.tag(), model.beta(), drift_sign};
}

double FluxModel::flux(double rho) const noexcept {
  return regime == Regime::Beta0 ? rho / (1.0 + rho) : rho;
}

double FluxModel::flux_slope(double rho) const noexcept {
  if (regime != Regime::Beta0) return 1.0;
  return 1.0 / ((1.0 + rho) * (1.0 + rho));
}

double FluxModel::drift(double x) const {
  if (regime == Regime::LogEnergy) {
    if (!(x > 0.0)) throw std::domain_error("logarithmic drift is singular at x = 0");
    return drift_sign * (beta + x) / x;
  }
  return drift_sign;
}

double FluxModel::potential(double x) const {
  if (regime == Regime::LogEnergy) {
    if (!(x > 0.0)) throw std::domain_error("logarithmic potential is singular at x = 0");
    return drift_sign * (beta * std::log(x) + x);
  }
  return drift_sign * x;
}

Grid Grid::uniform(double length, double dx) {
  if (!(dx > 0.0) || !(length > dx)) throw std::invalid_argument("grid needs 0 < dx < L");
  const double cells = std::round(length / dx);
  if (std::abs(cells * dx - length) > 1e-9 * length)
    throw std::invalid_argument("L must be an integer multiple of dx");
  return Grid{dx, static_cast<std::size_t>(cells)};
}

double Field::mass() const {
  // Compensated summation keeps mass accounting exact to rounding over long runs.
  double s = 0.0, comp = 0.0;
  for (double r : rho) {
    const double y = r - comp;
    const double t_sum = s + y;
    comp = (t_sum - s) - y;
    s = t_sum;
  }
  return s * grid.dx;
}

Field sample_profile(const DensityProfile& profile, const Grid& grid, Sampling sampling) {
  Field f{grid, std::vector<double>(grid.cells), 0.0};
  for (std::size_t i = 0; i < grid.cells; ++i)
    f.rho[i] = sampling == Sampling::PointValue ? profile(grid.center(i))
                                                : profile.integral(grid.face(i), grid.face(i + 1)) / grid.dx;
  return f;
}

FvScheme::FvScheme(FluxModel flux, Grid grid) : flux_(flux), grid_(grid) {
  const std::size_t n = grid_.cells;
  if (n < 2) throw std::invalid_argument("scheme needs at least two cells");
  const double dx = grid_.dx;
  w_plus_.resize(n - 1);
  w_minus_.resize(n - 1);
  double sup_a = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double af = flux_.potential(grid_.face(i + 1));
    w_plus_[i] = std::exp(flux_.potential(grid_.center(i + 1)) - af) / dx;
    w_minus_[i] = std::exp(flux_.potential(grid_.center(i)) - af) / dx;
    sup_a = std::max(sup_a, std::abs(flux_.drift(grid_.face(i + 1))));
  }
  // sup Phi' = 1 for every flux model.
  const double stated = dx * dx / (2.0 + dx * sup_a);
  double outflow = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double right = i + 1 < n ? w_minus_[i] : 0.0;
    const double left = i > 0 ? w_plus_[i - 1] : 0.0;
    outflow = std::max(outflow, right + left);
  }
  dt_max_ = 0.9 * std::min(stated, dx / outflow);
  phi_.resize(n);
}

void FvScheme::step(Field& field, double dt) const {
  if (field.rho.size() != grid_.cells) throw std::invalid_argument("field does not match the scheme grid");
  if (!(dt > 0.0) || dt > dt_max_ * (1.0 + 1e-12))
    throw std::invalid_argument("time step " + std::to_string(dt) + " violates the stability bound " +
                                std::to_string(dt_max_));
  const std::size_t n = grid_.cells;
  for (std::size_t i = 0; i < n; ++i) phi_[i] = flux_.flux(field.rho[i]);
  const double ratio = dt / grid_.dx;
  double left_face = 0.0;  // zero flux at x = 0
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double right_face = i + 1 < n ? w_plus_[i] * phi_[i + 1] - w_minus_[i] * phi_[i] : 0.0;
    field.rho[i] += ratio * (right_face - left_face);
    left_face = right_face;
    peak = std::max(peak, std::abs(field.rho[i]));
  }
  for (double r : field.rho)
    if (r < -1e-13 * peak) throw std::runtime_error("negative density after step; time step too large");
  field.t += dt;
}

namespace {

// Pointwise phi_c ceiling per cell, with a relative slack for rounding.
std::vector<double> phi_bound(const EnergyModel& model, const Grid& grid, double c, const SolveOptions& options) {
  std::vector<double> bound(grid.cells);
  for (std::size_t i = 0; i < grid.cells; ++i) {
    const double point = model.phi_c(grid.center(i), c, options.boundary);
    const double cell = model.phi_c_integral(grid.face(i), grid.face(i + 1), c, options.boundary) / grid.dx;
    bound[i] = (options.sampling == Sampling::PointValue ? point : std::max(point, cell)) * (1.0 + 1e-6);
  }
  return bound;
}

}  // namespace

Solution solve(const Field& initial, const FluxModel& flux, std::span<const double> snapshot_times,
               const SolveOptions& options, const EnergyModel* model) {
  for (std::size_t i = 0; i < snapshot_times.size(); ++i)
    if (snapshot_times[i] < initial.t || (i > 0 && snapshot_times[i] < snapshot_times[i - 1]))
      throw std::invalid_argument("snapshot times must be sorted and not before the initial time");
  const FvScheme scheme(flux, initial.grid);
  const Grid& grid = initial.grid;
  std::vector<double> bound;
  if (options.c_bound) {
    if (model == nullptr) throw std::invalid_argument("phi_c bound needs an energy model");
    bound = phi_bound(*model, grid, *options.c_bound, options);
  }
  const double mass0 = initial.mass();
  Solution sol;
  auto check = [&](const Field& f) {
    const double peak = *std::max_element(f.rho.begin(), f.rho.end());
    if (f.rho.back() > options.domain_tolerance * peak)
      throw std::runtime_error("domain too small: density at x = L is " + std::to_string(f.rho.back()) +
                               "; enlarge L");
    for (std::size_t i = 0; i < bound.size(); ++i)
      if (f.rho[i] > bound[i] + 1e-300)
        throw std::runtime_error("solution exceeds phi_c at x = " + std::to_string(grid.center(i)));
    const double drift = mass0 == 0.0 ? std::abs(f.mass()) : std::abs(f.mass() - mass0) / mass0;
    sol.max_mass_drift = std::max(sol.max_mass_drift, drift);
    if (drift > options.mass_tolerance)
      throw std::runtime_error("mass drift " + std::to_string(drift) + " above tolerance");
  };
  Field field = initial;
  check(field);
  for (double ts : snapshot_times) {
    const double span = ts - field.t;
    if (span > 0.0) {
      const auto steps = static_cast<std::size_t>(std::ceil(span / scheme.max_stable_dt()));
      const double dt = span / static_cast<double>(steps);
      for (std::size_t s = 0; s < steps; ++s) scheme.step(field, std::min(dt, scheme.max_stable_dt()));
      sol.steps += steps;
    }
    field.t = ts;
    check(field);
    sol.snapshots.push_back(field);
  }
  return sol;
}

std::vector<double> integrate_shape(const Field& field) {
  const std::size_t n = field.rho.size();
  std::vector<double> psi(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) psi[i] = psi[i + 1] + field.rho[i] * field.grid.dx;
  return psi;
}

std::vector<double> solve_shape_equation(std::vector<double> psi0, double h, const FluxModel& flux, double t,
                                         double dt) {
  const std::size_t nodes = psi0.size();
  if (nodes < 3) throw std::invalid_argument("shape solver needs at least three nodes");
  if (!(t >= 0.0) || !(dt > 0.0)) throw std::invalid_argument("shape solver needs t >= 0 and dt > 0");
  std::vector<double> psi = std::move(psi0);
  psi.back() = 0.0;
  if (t == 0.0) return psi;
  const auto steps = static_cast<std::size_t>(std::ceil(t / dt));
  const double tau = t / static_cast<double>(steps);
  const std::size_t m = nodes - 2;  // interior unknowns j = 1..nodes-2
  std::vector<double> lo(m), di(m), up(m);
  for (std::size_t r = 0; r < m; ++r) {
    const double x = static_cast<double>(r + 1) * h;
    const double a = flux.drift(x);
    lo[r] = 1.0 / (h * h) - a / (2.0 * h);
    di[r] = -2.0 / (h * h);
    up[r] = 1.0 / (h * h) + a / (2.0 * h);
  }
  std::vector<double> rhs(m), cp(m), dp(m);
  const double left = psi[0];
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t r = 0; r < m; ++r) {
      const double prev = psi[r];
      const double next = psi[r + 2];
      rhs[r] = psi[r + 1] + 0.5 * tau * (lo[r] * prev + di[r] * psi[r + 1] + up[r] * next);
    }
    rhs[0] += 0.5 * tau * lo[0] * left;
    // Thomas sweep on (I - tau/2 L).
    for (std::size_t r = 0; r < m; ++r) {
      const double b = 1.0 - 0.5 * tau * di[r];
      const double a = r > 0 ? -0.5 * tau * lo[r] : 0.0;
      const double c = -0.5 * tau * up[r];
      const double denom = r > 0 ? b - a * cp[r - 1] : b;
      cp[r] = c / denom;
      dp[r] = (rhs[r] - (r > 0 ? a * dp[r - 1] : 0.0)) / denom;
    }
    for (std::size_t r = m; r-- > 0;) psi[r + 1] = dp[r] - (r + 1 < m ? cp[r] * psi[r + 2] : 0.0);
  }
  return psi;
}

RefinementStudy refinement_study(const DensityProfile& profile, const FluxModel& flux, double length,
                                 double dx0, std::size_t levels, double t) {
  if (levels < 3) throw std::invalid_argument("refinement study needs at least three levels");
  RefinementStudy study;
  std::vector<Field> finals;
  const double times[] = {t};
  for (std::size_t lvl = 0; lvl < levels; ++lvl) {
    const double dx = dx0 / static_cast<double>(1u << lvl);
    const Field init = sample_profile(profile, Grid::uniform(length, dx), Sampling::CellAverage);
    finals.push_back(solve(init, flux, times).snapshots.back());
    study.dx.push_back(dx);
  }
  for (std::size_t lvl = 0; lvl + 1 < levels; ++lvl) {
    const auto& coarse = finals[lvl].rho;
    const auto& fine = finals[lvl + 1].rho;
    double diff = 0.0;
    for (std::size_t i = 0; i < coarse.size(); ++i)
      diff += std::abs(coarse[i] - 0.5 * (fine[2 * i] + fine[2 * i + 1]));
    study.differences.push_back(diff * study.dx[lvl]);
  }
  for (std::size_t i = 0; i + 1 < study.differences.size(); ++i)
    study.orders.push_back(std::log2(study.differences[i] / study.differences[i + 1]));
  return study;
}

}  // namespace zrp
