#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace zrp {

enum class Regime { Beta0, LogEnergy, SubLogEnergy };

std::string_view to_string(Regime regime);
/// Accepts "beta0", "log", "sublog" (and the enum spellings).
Regime parse_regime(std::string_view name);

/// Profile function u of the energy E_k = u(ln k).
///
/// Registered profiles must be positive, nondecreasing and have a bounded
/// derivative with limit `slope_limit` (1 for the logarithmic regime, 0 for
/// the sub-logarithmic one). `increment(x, dx)` returns u(x + dx) - u(x)
/// without forming the difference of two large numbers.
struct EnergyProfile {
  std::string id;
  double slope_limit = 0.0;
  std::function<double(double)> value;
  std::function<double(double, double)> increment;
};

/// Looks up a registered profile. Built-ins: "linear" (u = x + 1) and
/// "sqrt" (u = sqrt(x + 1)). Throws std::invalid_argument for unknown ids.
const EnergyProfile& energy_profile(std::string_view id);

/// Adds a profile to the registry. Not safe to call concurrently with lookups;
/// register everything before simulations start.
void register_energy_profile(EnergyProfile profile);

/// Regime tag plus inverse temperature and energy profile, validated on
/// construction against the admissible parameter ranges.
class EnergyRegime {
 public:
  static EnergyRegime beta0();
  static EnergyRegime log_energy(double beta, std::string u_id = "linear");
  static EnergyRegime sub_log_energy(double beta, std::string u_id = "sqrt");
  /// Generic factory; an empty u_id selects the regime default.
  static EnergyRegime make(Regime tag, double beta, std::string u_id = {});

  Regime tag() const noexcept { return tag_; }
  double beta() const noexcept { return beta_; }
  const std::string& u_id() const noexcept { return u_id_; }
  /// Null for Beta0.
  const EnergyProfile* profile() const noexcept { return profile_; }

  static double default_beta(Regime tag);
  static std::string default_u_id(Regime tag);

 private:
  EnergyRegime(Regime tag, double beta, std::string u_id, const EnergyProfile* profile)
      : tag_(tag), beta_(beta), u_id_(std::move(u_id)), profile_(profile) {}

  Regime tag_;
  double beta_;
  std::string u_id_;
  const EnergyProfile* profile_;
};

/// Energy, jump-rate and ensemble parameters at scale N. Immutable.
class EnergyModel {
 public:
  EnergyModel(EnergyRegime regime, std::int64_t n);

  const EnergyRegime& regime() const noexcept { return regime_; }
  Regime tag() const noexcept { return regime_.tag(); }
  double beta() const noexcept { return regime_.beta(); }
  std::int64_t n() const noexcept { return n_; }

  /// E_k = u(ln k); zero for Beta0.
  double energy(std::int64_t k) const;
  /// ln theta_k = -beta E_k - k/N.
  double log_theta(std::int64_t k) const;
  double theta(std::int64_t k) const;
  /// ln lambda_k = -beta (E_{k+1} - E_k) - 1/N, evaluated through the profile increment.
  double log_lambda(std::int64_t k) const;
  double lambda(std::int64_t k) const;

  /// N_beta = exp(beta E_N).
  double n_beta() const noexcept { return n_beta_; }
  double log_n_beta() const noexcept { return log_n_beta_; }
  /// c_0 = min_k exp(beta E_k); attained at k = 1 for the nondecreasing profiles.
  double c0() const noexcept { return c0_; }

  /// Limit of N (lambda_{xN} - 1): -1, or -(beta + x)/x in the logarithmic regime.
  double drift_alpha(double x) const;

  /// Static profile phi_c(x). c may equal c0 only when `boundary` is set.
  double phi_c(double x, double c, bool boundary = false) const;

  /// Integral of phi_c over [a, b] in closed form (b may be +inf).
  double phi_c_integral(double a, double b, double c, bool boundary = false) const;

  /// Limit density of N_beta theta_{xN}: exp(-x), or x^{-beta} exp(-x) in the logarithmic regime.
  double theta_limit(double x) const;

 private:
  void check_c(double c, bool boundary) const;

  EnergyRegime regime_;
  std::int64_t n_;
  double n_beta_ = 1.0;
  double log_n_beta_ = 0.0;
  double c0_ = 1.0;
};

/// Limit shape of uniformly random partitions: -(sqrt6/pi) ln(1 - exp(-pi x / sqrt6)).
double vershik(double x);

}  // namespace zrp
