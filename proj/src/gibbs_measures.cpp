#include "zrp/gibbs_measures.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace zrp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Tail of sum_{k>K} rho_k for any p_k <= c theta_k: theta decays at least like e^{-1/N}.
double tail_bound(const EnergyModel& model, double log_c, std::size_t k) {
  const double lp = log_c + model.log_theta(static_cast<std::int64_t>(k) + 1);
  const double p = std::exp(lp);
  return p / ((1.0 - p) * -std::expm1(-1.0 / static_cast<double>(model.n())));
}

double quad(const std::function<double(double)>& f, double a, double b) {
  if (!(b > a)) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 12, 1e-13);
}

}  // namespace

ProductGeometric::ProductGeometric(std::vector<double> log_params, double tail_mass)
    : log_params_(std::move(log_params)), tail_mass_(tail_mass) {
  for (double lp : log_params_)
    if (!(lp < 0.0)) throw std::invalid_argument("Geometric parameters must be < 1");
}

double ProductGeometric::log_param(std::size_t k) const {
  if (k == 0) throw std::out_of_range("sites are numbered from 1");
  return k <= log_params_.size() ? log_params_[k - 1] : kNegInf;
}

double ProductGeometric::param(std::size_t k) const { return std::exp(log_param(k)); }

double ProductGeometric::mean(std::size_t k) const {
  const double lp = log_param(k);
  return std::exp(lp) / -std::expm1(lp);
}

double ProductGeometric::variance(std::size_t k) const {
  const double rho = mean(k);
  return rho * rho + rho;
}

double tail_tolerance(const EnergyModel& model) {
  return 1e-8 * static_cast<double>(model.n()) / model.n_beta();
}

std::pair<std::size_t, double> truncation_site(const EnergyModel& model, double c, double tolerance) {
  if (c <= 0.0) return {0, 0.0};
  const double log_c = std::log(c);
  std::size_t hi = 1;
  while (tail_bound(model, log_c, hi) > tolerance) hi *= 2;
  if (hi == 1) return {1, tail_bound(model, log_c, 1)};
  // tail_bound(lo) > tolerance >= tail_bound(hi)
  std::size_t lo = hi / 2;
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (tail_bound(model, log_c, mid) > tolerance ? lo : hi) = mid;
  }
  return {hi, tail_bound(model, log_c, hi)};
}

ProductGeometric invariant_measure(const EnergyModel& model, double c_frac, bool boundary) {
  if (!(c_frac >= 0.0) || c_frac > 1.0) throw std::invalid_argument("c_frac must lie in [0, 1]");
  if (c_frac == 1.0 && !boundary) throw std::invalid_argument("c = c0 requires the boundary flag");
  const double c = c_frac * model.c0();
  if (c == 0.0) return ProductGeometric({}, 0.0);
  const auto [k_max, tail] = truncation_site(model, c, tail_tolerance(model));
  std::vector<double> lp(k_max);
  const double log_c = std::log(c);
  for (std::size_t k = 1; k <= k_max; ++k) lp[k - 1] = log_c + model.log_theta(static_cast<std::int64_t>(k));
  return ProductGeometric(std::move(lp), tail);
}

DensityProfile::DensityProfile(std::string name, Density density, Integral integral)
    : name_(std::move(name)), density_(std::move(density)), integral_(std::move(integral)) {}

DensityProfile DensityProfile::zero() {
  return DensityProfile("zero", [](double) { return 0.0; }, [](double, double) { return 0.0; });
}

DensityProfile DensityProfile::phi(const EnergyModel& model, double c_frac, bool boundary) {
  const double c = c_frac * model.c0();
  model.phi_c(1.0, c, boundary);  // validates c
  std::ostringstream name;
  name << "phi(" << c_frac << ")";
  return DensityProfile(
      name.str(), [model, c, boundary](double x) { return model.phi_c(x, c, boundary); },
      [model, c, boundary](double a, double b) { return model.phi_c_integral(a, b, c, boundary); });
}

DensityProfile DensityProfile::bump(const EnergyModel& model, double c_frac, double lo, double hi) {
  if (!(0.0 < lo && lo < hi)) throw std::invalid_argument("bump requires 0 < lo < hi");
  const double c = c_frac * model.c0();
  model.phi_c(1.0, c, false);
  auto density = [model, c, lo, hi](double x) {
    if (x <= lo || x >= hi) return 0.0;
    const double s = (2.0 * x - lo - hi) / (hi - lo);
    return 0.5 * model.phi_c(x, c) * std::exp(1.0 - 1.0 / (1.0 - s * s));
  };
  auto integral = [density, lo, hi](double a, double b) {
    return quad(density, std::max(a, lo), std::min(b, hi));
  };
  return DensityProfile("bump", density, integral);
}

DensityProfile DensityProfile::table(std::vector<std::pair<double, double>> points) {
  if (points.size() < 2) throw std::invalid_argument("profile table needs at least two points");
  std::sort(points.begin(), points.end());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].second < 0.0 || points[i].first < 0.0)
      throw std::invalid_argument("profile table entries must be nonnegative");
    if (i > 0 && points[i].first == points[i - 1].first)
      throw std::invalid_argument("profile table has a repeated abscissa");
  }
  auto pts = std::make_shared<const std::vector<std::pair<double, double>>>(std::move(points));
  auto density = [pts](double x) {
    const auto& p = *pts;
    if (x < p.front().first || x > p.back().first) return 0.0;
    auto it = std::upper_bound(p.begin(), p.end(), x,
                               [](double v, const auto& e) { return v < e.first; });
    if (it == p.end()) return p.back().second;
    const auto& [x1, y1] = *it;
    const auto& [x0, y0] = *(it - 1);
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
  };
  auto integral = [pts](double a, double b) {
    const auto& p = *pts;
    double sum = 0.0;
    for (std::size_t i = 1; i < p.size(); ++i) {
      const auto [x0, y0] = p[i - 1];
      const auto [x1, y1] = p[i];
      const double l = std::max(a, x0), r = std::min(b, x1);
      if (!(r > l)) continue;
      const double yl = y0 + (y1 - y0) * (l - x0) / (x1 - x0);
      const double yr = y0 + (y1 - y0) * (r - x0) / (x1 - x0);
      sum += 0.5 * (yl + yr) * (r - l);
    }
    return sum;
  };
  return DensityProfile("table", density, integral);
}

double DensityProfile::cell_average(std::int64_t n, std::int64_t k) const {
  const double nd = static_cast<double>(n);
  return nd * integral(static_cast<double>(k - 1) / nd, static_cast<double>(k) / nd);
}

DensityProfile read_profile_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open profile table '" + path + "'");
  std::vector<std::pair<double, double>> points;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double x, y;
    if (!(ls >> x)) continue;
    if (!(ls >> y))
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected two columns");
    points.emplace_back(x, y);
  }
  return DensityProfile::table(std::move(points));
}

LocalEquilibrium local_equilibrium(const EnergyModel& model, const DensityProfile& profile,
                                   double c_frac, double max_discrepancy, bool boundary) {
  if (!(c_frac >= 0.0) || c_frac > 1.0) throw std::invalid_argument("c_frac must lie in [0, 1]");
  const double c = c_frac * model.c0();
  LocalEquilibrium out;
  if (c == 0.0) {
    out.measure = ProductGeometric({}, 0.0);
    return out;
  }
  const double nd = static_cast<double>(model.n());
  const auto [k_max, tail] = truncation_site(model, c, tail_tolerance(model));
  const double log_c = std::log(c);
  std::vector<double> lp(k_max);
  double clamp = 0.0;
  for (std::size_t k = 1; k <= k_max; ++k) {
    const auto ki = static_cast<std::int64_t>(k);
    const double x = static_cast<double>(k) / nd;
    if (profile(x) > model.phi_c(x, c, boundary) * (1.0 + 1e-12))
      throw std::invalid_argument("initial profile exceeds phi_c at x = " + std::to_string(x));
    const double cell = profile.cell_average(model.n(), ki);
    const double cap = log_c + model.log_theta(ki);
    const double rho = cell / model.n_beta();
    const double lt = rho > 0.0 ? std::log(rho) - std::log1p(rho) : kNegInf;
    if (lt > cap) {
      const double capped = std::exp(cap);
      clamp += std::abs(cell - model.n_beta() * capped / (1.0 - capped));
      ++out.clamped_sites;
      lp[k - 1] = cap;
    } else {
      lp[k - 1] = lt;
    }
  }
  out.clamp_discrepancy = clamp / nd;
  if (out.clamp_discrepancy > max_discrepancy)
    throw std::invalid_argument("local equilibrium clamp discrepancy " +
                                std::to_string(out.clamp_discrepancy) + " exceeds threshold");
  out.mean_matching_error =
      out.clamp_discrepancy + profile.integral(static_cast<double>(k_max) / nd,
                                               std::numeric_limits<double>::infinity());
  out.measure = ProductGeometric(std::move(lp), tail);
  return out;
}

Configuration sample(const ProductGeometric& measure, Rng& rng) {
  Configuration eta;
  const auto lps = measure.log_params();
  for (std::size_t i = 0; i < lps.size(); ++i) {
    const double lp = lps[i];
    if (lp == kNegInf) continue;
    const double draw = std::floor(std::log(rng.uniform_pos()) / lp);
    if (draw >= 1.0) eta.add(i + 1, static_cast<Count>(draw));
  }
  return eta;
}

TotalMoments total_moments(const ProductGeometric& measure) {
  TotalMoments m;
  for (std::size_t k = 1; k <= measure.k_max(); ++k) {
    const double rho = measure.mean(k);
    m.mean_total += rho;
    m.var_total += rho * rho + rho;
  }
  m.tail_mass = measure.tail_mass();
  return m;
}

double relative_entropy(const ProductGeometric& mu, const ProductGeometric& reference) {
  const std::size_t k_max = std::max(mu.k_max(), reference.k_max());
  double h = 0.0;
  for (std::size_t k = 1; k <= k_max; ++k) {
    const double lp = mu.log_param(k);
    const double lq = reference.log_param(k);
    if (lp > lq + 1e-12) throw std::invalid_argument("relative_entropy requires p_k <= q_k at every site");
    if (lp == kNegInf) {
      if (lq != kNegInf) h -= std::log1p(-std::exp(lq));
      continue;
    }
    const double p = std::exp(lp);
    h += std::log1p(-p) - std::log1p(-std::exp(lq)) + p / (1.0 - p) * (lp - lq);
  }
  return h;
}

bool detailed_balance_check(const ProductGeometric& measure, const EnergyModel& model,
                            const Configuration& eta, Site x, double rate_scale) {
  const Count nx = eta.at(x);
  if (nx == 0) throw std::invalid_argument("detailed_balance_check requires eta(x) > 0");
  if (x + 1 > measure.k_max()) throw std::out_of_range("site x + 1 lies beyond the truncation");
  const double lx = measure.log_param(x);
  const double ly = measure.log_param(x + 1);
  const auto ny = static_cast<double>(eta.at(x + 1));
  const auto nxd = static_cast<double>(nx);
  const double before = nxd * lx + ny * ly;
  const double after = (nxd - 1.0) * lx + (ny + 1.0) * ly;
  const double lhs = before + std::log(rate_scale) + model.log_lambda(static_cast<std::int64_t>(x));
  return std::abs(lhs - after) <= 1e-12;
}

std::vector<BoundaryPoint> boundary_divergence(const EnergyRegime& regime,
                                               std::span<const std::int64_t> ladder) {
  std::vector<BoundaryPoint> out;
  out.reserve(ladder.size());
  for (std::int64_t n : ladder) {
    const EnergyModel model(regime, n);
    const auto m = total_moments(invariant_measure(model, 1.0, true));
    const double scale = model.n_beta() / static_cast<double>(n);
    out.push_back({n, scale * m.mean_total, scale * scale * m.var_total});
  }
  return out;
}

double riemann_theta_sum(const EnergyModel& model, double a, double b) {
  const double nd = static_cast<double>(model.n());
  const auto first = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(a * nd)));
  const auto last = static_cast<std::int64_t>(std::floor(b * nd));
  double sum = 0.0;
  for (std::int64_t k = first; k <= last; ++k) sum += std::exp(model.log_n_beta() + model.log_theta(k));
  return sum / nd;
}

double invariant_mean_matching(const EnergyModel& model, double c_frac) {
  const auto measure = invariant_measure(model, c_frac);
  const double c = c_frac * model.c0();
  const double nd = static_cast<double>(model.n());
  double sum = 0.0;
  for (std::size_t k = 1; k <= measure.k_max(); ++k) {
    const double cell = nd * model.phi_c_integral(static_cast<double>(k - 1) / nd,
                                                  static_cast<double>(k) / nd, c);
    sum += std::abs(model.n_beta() * measure.mean(k) - cell);
  }
  const double tail = c == 0.0 ? 0.0
                               : model.phi_c_integral(static_cast<double>(measure.k_max()) / nd,
                                                      std::numeric_limits<double>::infinity(), c);
  return sum / nd + tail;
}

}  // namespace zrp
