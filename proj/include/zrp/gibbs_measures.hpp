#pragma once

#include "zrp/configuration.hpp"
#include "zrp/energy_model.hpp"
#include "zrp/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace zrp {

/// Product of Geometric laws P(eta(k) = n) = (1 - p_k) p_k^n on sites
/// 1..k_max, empty beyond. `tail_mass` bounds the expected number of particles
/// the truncation discards.
class ProductGeometric {
 public:
  ProductGeometric() = default;
  /// log_params[k-1] = ln p_k (use -inf for p_k = 0).
  ProductGeometric(std::vector<double> log_params, double tail_mass);

  std::size_t k_max() const noexcept { return log_params_.size(); }
  double tail_mass() const noexcept { return tail_mass_; }

  double log_param(std::size_t k) const;
  double param(std::size_t k) const;
  /// rho_k = p_k / (1 - p_k).
  double mean(std::size_t k) const;
  /// rho_k^2 + rho_k.
  double variance(std::size_t k) const;

  std::span<const double> log_params() const noexcept { return log_params_; }

 private:
  std::vector<double> log_params_;
  double tail_mass_ = 0.0;
};

/// Expected-particle tail tolerance 1e-8 * N / N_beta used to pick k_max.
double tail_tolerance(const EnergyModel& model);

/// Smallest K such that the expected mass of a product measure dominated by
/// R_{c,N} beyond site K is below `tolerance`; also returns that bound.
std::pair<std::size_t, double> truncation_site(const EnergyModel& model, double c, double tolerance);

/// Grand canonical measure R_{c,N}, p_k = c theta_k with c = c_frac * c0.
/// c_frac = 1 requires `boundary`.
ProductGeometric invariant_measure(const EnergyModel& model, double c_frac, bool boundary = false);

/// Macroscopic initial density rho_0 on (0, inf) with exact or numerical cell integrals.
class DensityProfile {
 public:
  using Density = std::function<double(double)>;
  using Integral = std::function<double(double, double)>;

  DensityProfile(std::string name, Density density, Integral integral);

  static DensityProfile zero();
  /// phi_c with c = c_frac * c0.
  static DensityProfile phi(const EnergyModel& model, double c_frac, bool boundary = false);
  /// 0.5 * phi_c(x) * B(x), B the C-infinity bump exp(1 - 1/(1 - s^2)) on [lo, hi].
  static DensityProfile bump(const EnergyModel& model, double c_frac, double lo = 0.5, double hi = 3.0);
  /// Piecewise linear through (x, rho) pairs, zero outside the table's range.
  static DensityProfile table(std::vector<std::pair<double, double>> points);

  const std::string& name() const noexcept { return name_; }
  double operator()(double x) const { return density_(x); }
  /// Integral over [a, b]; b may be +inf.
  double integral(double a, double b) const { return integral_(a, b); }
  /// N * integral over ((k-1)/N, k/N].
  double cell_average(std::int64_t n, std::int64_t k) const;

 private:
  std::string name_;
  Density density_;
  Integral integral_;
};

/// Reads two whitespace-separated columns (x rho) per line; '#' starts a comment.
DensityProfile read_profile_table(const std::string& path);

struct LocalEquilibrium {
  ProductGeometric measure;
  /// (1/N) sum_k |N_beta rho_{N,k} - cell average|, from clamping only.
  double clamp_discrepancy = 0.0;
  std::size_t clamped_sites = 0;
  /// Clamp discrepancy plus the profile mass beyond the truncation site.
  double mean_matching_error = 0.0;
};

/// Local equilibrium mu^N matching N_beta rho_{N,k} to the cell averages of
/// `profile`, clamped to theta_{N,k} <= c theta_k. Throws if the profile
/// exceeds phi_c on the grid or the clamp discrepancy exceeds `max_discrepancy`.
LocalEquilibrium local_equilibrium(const EnergyModel& model, const DensityProfile& profile,
                                   double c_frac, double max_discrepancy = 1e-2,
                                   bool boundary = false);

/// Independent Geometric draws by inversion, floor(ln U / ln p_k).
Configuration sample(const ProductGeometric& measure, Rng& rng);

struct TotalMoments {
  double mean_total = 0.0;
  double var_total = 0.0;
  double tail_mass = 0.0;
};

/// Sum of rho_k and of rho_k^2 + rho_k over the retained sites.
TotalMoments total_moments(const ProductGeometric& measure);

/// Sum over sites of H(Geom(p_k) | Geom(q_k)); requires p_k <= q_k everywhere.
double relative_entropy(const ProductGeometric& mu, const ProductGeometric& reference);

/// Checks log R(eta) + log(rate_scale * lambda_x) = log R(eta^{x,x+1}) on the
/// two site-local factors, to 1e-12 absolute. Throws if eta(x) = 0.
bool detailed_balance_check(const ProductGeometric& measure, const EnergyModel& model,
                            const Configuration& eta, Site x, double rate_scale = 1.0);

struct BoundaryPoint {
  std::int64_t n = 0;
  double scaled_mean = 0.0;
  double scaled_var = 0.0;
};

/// (N_beta/N) sum rho_{k,c0} and (N_beta/N)^2 sum (rho^2 + rho) along a ladder of N.
std::vector<BoundaryPoint> boundary_divergence(const EnergyRegime& regime,
                                               std::span<const std::int64_t> ladder);

/// (1/N) sum_{aN <= k <= bN} N_beta theta_k.
double riemann_theta_sum(const EnergyModel& model, double a, double b);

/// (1/N) sum_k |N_beta rho_{k,c} - N int_cell phi_c|, c = c_frac * c0.
double invariant_mean_matching(const EnergyModel& model, double c_frac);

}  // namespace zrp
