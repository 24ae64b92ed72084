#include "zrp/energy_model.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

namespace zrp {

namespace {

std::map<std::string, EnergyProfile, std::less<>>& registry() {
  static std::map<std::string, EnergyProfile, std::less<>> profiles = [] {
    std::map<std::string, EnergyProfile, std::less<>> m;
    m.emplace("linear", EnergyProfile{"linear", 1.0, [](double x) { return x + 1.0; },
                                      [](double, double dx) { return dx; }});
    // sqrt(x + dx + 1) - sqrt(x + 1) = dx / (sqrt(x + dx + 1) + sqrt(x + 1))
    m.emplace("sqrt",
              EnergyProfile{"sqrt", 0.0, [](double x) { return std::sqrt(x + 1.0); },
                            [](double x, double dx) {
                              return dx / (std::sqrt(x + dx + 1.0) + std::sqrt(x + 1.0));
                            }});
    return m;
  }();
  return profiles;
}

}  // namespace

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::Beta0:
      return "beta0";
    case Regime::LogEnergy:
      return "log";
    case Regime::SubLogEnergy:
      return "sublog";
  }
  return "unknown";
}

Regime parse_regime(std::string_view name) {
  if (name == "beta0" || name == "Beta0") return Regime::Beta0;
  if (name == "log" || name == "LogEnergy") return Regime::LogEnergy;
  if (name == "sublog" || name == "SubLogEnergy") return Regime::SubLogEnergy;
  throw std::invalid_argument("unknown regime '" + std::string(name) +
                              "' (expected beta0, log or sublog)");
}

const EnergyProfile& energy_profile(std::string_view id) {
  auto& reg = registry();
  auto it = reg.find(id);
  if (it == reg.end()) throw std::invalid_argument("unknown energy profile '" + std::string(id) + "'");
  return it->second;
}

void register_energy_profile(EnergyProfile profile) {
  if (profile.slope_limit != 0.0 && profile.slope_limit != 1.0)
    throw std::invalid_argument("energy profile slope limit must be 0 or 1");
  if (!profile.value || !profile.increment)
    throw std::invalid_argument("energy profile '" + profile.id + "' is missing evaluators");
  if (!(profile.value(0.0) > 0.0))
    throw std::invalid_argument("energy profile '" + profile.id + "' must be positive");
  auto id = profile.id;
  registry().insert_or_assign(std::move(id), std::move(profile));
}

double EnergyRegime::default_beta(Regime tag) {
  switch (tag) {
    case Regime::Beta0:
      return 0.0;
    case Regime::LogEnergy:
      return 0.5;
    case Regime::SubLogEnergy:
      return 1.0;
  }
  return 0.0;
}

std::string EnergyRegime::default_u_id(Regime tag) {
  switch (tag) {
    case Regime::Beta0:
      return "none";
    case Regime::LogEnergy:
      return "linear";
    case Regime::SubLogEnergy:
      return "sqrt";
  }
  return "none";
}

EnergyRegime EnergyRegime::beta0() { return EnergyRegime(Regime::Beta0, 0.0, "none", nullptr); }

EnergyRegime EnergyRegime::log_energy(double beta, std::string u_id) {
  if (!(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("LogEnergy requires 0 < beta < 1 (beta >= 1 has diverging shape variance)");
  const EnergyProfile& p = energy_profile(u_id);
  if (p.slope_limit != 1.0)
    throw std::invalid_argument("LogEnergy requires a profile with u' -> 1, got '" + u_id + "'");
  return EnergyRegime(Regime::LogEnergy, beta, std::move(u_id), &p);
}

EnergyRegime EnergyRegime::sub_log_energy(double beta, std::string u_id) {
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw std::invalid_argument("SubLogEnergy requires beta > 0");
  const EnergyProfile& p = energy_profile(u_id);
  if (p.slope_limit != 0.0)
    throw std::invalid_argument("SubLogEnergy requires a profile with u' -> 0, got '" + u_id + "'");
  return EnergyRegime(Regime::SubLogEnergy, beta, std::move(u_id), &p);
}

EnergyRegime EnergyRegime::make(Regime tag, double beta, std::string u_id) {
  if (u_id.empty()) u_id = default_u_id(tag);
  switch (tag) {
    case Regime::Beta0:
      if (beta != 0.0) throw std::invalid_argument("Beta0 requires beta == 0");
      return beta0();
    case Regime::LogEnergy:
      return log_energy(beta, std::move(u_id));
    case Regime::SubLogEnergy:
      return sub_log_energy(beta, std::move(u_id));
  }
  throw std::invalid_argument("unknown regime");
}

EnergyModel::EnergyModel(EnergyRegime regime, std::int64_t n) : regime_(std::move(regime)), n_(n) {
  if (n < 1) throw std::invalid_argument("scale N must be a positive integer");
  if (regime_.profile() != nullptr) {
    log_n_beta_ = regime_.beta() * energy(n_);
    n_beta_ = std::exp(log_n_beta_);
    c0_ = std::exp(regime_.beta() * regime_.profile()->value(0.0));
  }
}

double EnergyModel::energy(std::int64_t k) const {
  if (k < 1) throw std::invalid_argument("site index must be >= 1");
  if (regime_.profile() == nullptr) return 0.0;
  return regime_.profile()->value(std::log(static_cast<double>(k)));
}

double EnergyModel::log_theta(std::int64_t k) const {
  return -regime_.beta() * energy(k) - static_cast<double>(k) / static_cast<double>(n_);
}

double EnergyModel::theta(std::int64_t k) const { return std::exp(log_theta(k)); }

double EnergyModel::log_lambda(std::int64_t k) const {
  if (k < 1) throw std::invalid_argument("site index must be >= 1");
  const double inv_n = 1.0 / static_cast<double>(n_);
  if (regime_.profile() == nullptr) return -inv_n;
  const double kd = static_cast<double>(k);
  const double dE = regime_.profile()->increment(std::log(kd), std::log1p(1.0 / kd));
  return -regime_.beta() * dE - inv_n;
}

double EnergyModel::lambda(std::int64_t k) const { return std::exp(log_lambda(k)); }

double EnergyModel::drift_alpha(double x) const {
  if (!(x > 0.0)) throw std::domain_error("drift_alpha requires x > 0");
  if (tag() == Regime::LogEnergy) return -(beta() + x) / x;
  return -1.0;
}

void EnergyModel::check_c(double c, bool boundary) const {
  if (!(c >= 0.0)) throw std::invalid_argument("c must be nonnegative");
  // c is usually formed as c_frac * c0, so compare with a relative slack.
  const double slack = 1e-12 * c0_;
  if (c > c0_ + slack) throw std::invalid_argument("c exceeds c0");
  if (!boundary && c >= c0_ - slack)
    throw std::invalid_argument("c = c0 requires the boundary flag");
}

double EnergyModel::phi_c(double x, double c, bool boundary) const {
  check_c(c, boundary);
  if (x < 0.0) throw std::domain_error("phi_c requires x >= 0");
  if (c == 0.0) return 0.0;
  switch (tag()) {
    case Regime::Beta0: {
      const double q = c * std::exp(-x);
      return q / (1.0 - q);
    }
    case Regime::LogEnergy:
      if (x == 0.0) throw std::domain_error("phi_c is singular at x = 0 in the logarithmic regime");
      return c * std::pow(x, -beta()) * std::exp(-x);
    case Regime::SubLogEnergy:
      return c * std::exp(-x);
  }
  return 0.0;
}

double EnergyModel::phi_c_integral(double a, double b, double c, bool boundary) const {
  check_c(c, boundary);
  if (!(a >= 0.0 && b >= a)) throw std::domain_error("phi_c_integral requires 0 <= a <= b");
  if (c == 0.0 || a == b) return 0.0;
  const double eb = std::isinf(b) ? 0.0 : std::exp(-b);
  switch (tag()) {
    case Regime::Beta0:
      return std::log1p(-c * eb) - std::log1p(-c * std::exp(-a));
    case Regime::LogEnergy: {
      const double s = 1.0 - beta();
      const double upper_a = boost::math::tgamma(s, a);
      const double upper_b = std::isinf(b) ? 0.0 : boost::math::tgamma(s, b);
      return c * (upper_a - upper_b);
    }
    case Regime::SubLogEnergy:
      return c * (std::exp(-a) - eb);
  }
  return 0.0;
}

double EnergyModel::theta_limit(double x) const {
  if (tag() == Regime::LogEnergy) {
    if (!(x > 0.0)) throw std::domain_error("theta_limit is singular at x = 0");
    return std::pow(x, -beta()) * std::exp(-x);
  }
  return std::exp(-x);
}

double vershik(double x) {
  if (!(x > 0.0)) throw std::domain_error("vershik requires x > 0");
  const double s = std::sqrt(6.0) / std::numbers::pi;
  return -s * std::log1p(-std::exp(-x / s));
}

}  // namespace zrp
