#pragma once

#include "zrp/energy_model.hpp"
#include "zrp/gibbs_measures.hpp"

#include <optional>
#include <span>
#include <vector>

namespace zrp {

/// Flux Phi and drift a of d_t rho = d_x^2 Phi(rho) + d_x(a(x) Phi(rho)).
/// `drift_sign` = -1 flips the drift term (used only to falsify).
struct FluxModel {
  Regime regime = Regime::Beta0;
  double beta = 0.0;
  double drift_sign = 1.0;

  static FluxModel for_model(const EnergyModel& model, double drift_sign = 1.0);

  /// rho/(1+rho) for Beta0, rho otherwise.
  double flux(double rho) const noexcept;
  double flux_slope(double rho) const noexcept;
  /// drift_sign * ((beta + x)/x or 1).
  double drift(double x) const;
  /// A with A' = drift(x): drift_sign * (beta ln x + x) or drift_sign * x.
  double potential(double x) const;
};

/// Cells of width dx on [0, L], centers (i + 1/2) dx.
struct Grid {
  double dx = 0.01;
  std::size_t cells = 0;

  static Grid uniform(double length, double dx);
  double length() const noexcept { return dx * static_cast<double>(cells); }
  double center(std::size_t i) const noexcept { return (static_cast<double>(i) + 0.5) * dx; }
  /// Face between cells i - 1 and i.
  double face(std::size_t i) const noexcept { return static_cast<double>(i) * dx; }
};

struct Field {
  Grid grid;
  std::vector<double> rho;
  double t = 0.0;

  double mass() const;
};

enum class Sampling { CellAverage, PointValue };

/// Initial field from exact cell integrals or center values of the profile.
Field sample_profile(const DensityProfile& profile, const Grid& grid, Sampling sampling);

/// Conservative explicit finite volumes with the exponentially fitted face flux
///   F_{i+1/2} = e^{-A(x_{i+1/2})} (e^{A(x_{i+1})} Phi_{i+1} - e^{A(x_i)} Phi_i) / dx
/// and zero flux at both ends. Grid samples of e^{-A}-shaped fluxes (phi_c)
/// are fixed points up to rounding; the update is monotone for dt <= max_stable_dt.
class FvScheme {
 public:
  FvScheme(FluxModel flux, Grid grid);

  const FluxModel& flux() const noexcept { return flux_; }
  const Grid& grid() const noexcept { return grid_; }

  /// 0.9 * min(dx^2 / (2 sup Phi' + dx sup|a| sup Phi'), monotonicity limit).
  double max_stable_dt() const noexcept { return dt_max_; }

  /// Throws for dt above max_stable_dt or a negative density afterwards.
  void step(Field& field, double dt) const;

 private:
  FluxModel flux_;
  Grid grid_;
  std::vector<double> w_plus_;   // face i+1/2 weight of Phi_{i+1}
  std::vector<double> w_minus_;  // face i+1/2 weight of Phi_i
  double dt_max_ = 0.0;
  mutable std::vector<double> phi_;
};

struct SolveOptions {
  /// phi_c bound to assert at snapshots (absent: no check).
  std::optional<double> c_bound;
  bool boundary = false;
  Sampling sampling = Sampling::CellAverage;
  double mass_tolerance = 1e-9;
  double domain_tolerance = 1e-8;
};

struct Solution {
  std::vector<Field> snapshots;
  std::size_t steps = 0;
  double max_mass_drift = 0.0;
};

/// Steps an initial field to each snapshot time (sorted, >= 0), landing on
/// them exactly. Throws std::runtime_error on a phi_c bound violation, mass
/// drift above tolerance, or density at x = L above domain_tolerance * max.
Solution solve(const Field& initial, const FluxModel& flux, std::span<const double> snapshot_times,
               const SolveOptions& options = {}, const EnergyModel* model = nullptr);

/// psi at the faces x_i = i dx: psi_i = dx sum_{m >= i} rho_m, so psi_0 is the mass.
std::vector<double> integrate_shape(const Field& field);

/// Crank-Nicolson for d_t psi = d_x^2 psi + a(x) d_x psi on nodes x_j = j h,
/// psi(0) = psi0[0] held fixed, psi(L) = 0. Returns nodal values at time t.
std::vector<double> solve_shape_equation(std::vector<double> psi0, double h, const FluxModel& flux,
                                         double t, double dt);

struct RefinementStudy {
  std::vector<double> dx;
  /// ||rho_h - R rho_{h/2}||_1 for consecutive levels.
  std::vector<double> differences;
  /// log2 of consecutive difference ratios.
  std::vector<double> orders;
};

/// Solves on dx0, dx0/2, ... (levels grids) to time t from cell averages of `profile`.
RefinementStudy refinement_study(const DensityProfile& profile, const FluxModel& flux, double length,
                                 double dx0, std::size_t levels, double t);

}  // namespace zrp
