#include "zrp/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace zrp {

void RunningStats::add(double x) noexcept {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

void RunningStats::merge(const RunningStats& other) noexcept {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const auto na = static_cast<double>(n_);
  const auto nb = static_cast<double>(other.n_);
  const double delta = other.mean_ - mean_;
  const double total = na + nb;
  mean_ += delta * nb / total;
  m2_ += other.m2_ + delta * delta * na * nb / total;
  n_ += other.n_;
}

double RunningStats::variance() const noexcept {
  if (n_ < 2) return std::numeric_limits<double>::quiet_NaN();
  return m2_ / static_cast<double>(n_ - 1);
}

double RunningStats::stderr_mean() const noexcept {
  return std::sqrt(variance() / static_cast<double>(n_));
}

double kolmogorov_survival(double x) {
  // Below 0.2 the survival function equals 1 to double precision.
  if (x < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace {

double corrected_p(double d, double n_eff) {
  const double root = std::sqrt(n_eff);
  return kolmogorov_survival((root + 0.12 + 0.11 / root) * d);
}

}  // namespace

TestResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample needs nonempty samples");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const auto n = static_cast<double>(x.size());
  const auto m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return {d, corrected_p(d, n * m / (n + m))};
}

TestResult ks_one_sample(std::span<const double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw std::invalid_argument("ks_one_sample needs a nonempty sample");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  const auto n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return {d, corrected_p(d, n)};
}

TestResult chi_square_gof(std::span<const std::uint64_t> observed, std::span<const double> expected) {
  if (observed.size() != expected.size() + 1 && observed.size() != expected.size())
    throw std::invalid_argument("observed must have one cell per probability, plus an optional remainder");
  double total = 0.0;
  for (auto o : observed) total += static_cast<double>(o);
  std::vector<double> obs(observed.begin(), observed.end());
  std::vector<double> exp_counts;
  double used = 0.0;
  for (double p : expected) {
    exp_counts.push_back(p * total);
    used += p;
  }
  if (observed.size() == expected.size() + 1) exp_counts.push_back(std::max(0.0, 1.0 - used) * total);
  // Pool small cells rightwards; a small last cell joins its left neighbour.
  std::vector<double> po, pe;
  double acc_o = 0.0, acc_e = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    acc_o += obs[i];
    acc_e += exp_counts[i];
    if (acc_e >= 5.0) {
      po.push_back(acc_o);
      pe.push_back(acc_e);
      acc_o = acc_e = 0.0;
    }
  }
  if (acc_e > 0.0 || acc_o > 0.0) {
    if (pe.empty()) {
      po.push_back(acc_o);
      pe.push_back(acc_e);
    } else {
      po.back() += acc_o;
      pe.back() += acc_e;
    }
  }
  if (pe.size() < 2) throw std::invalid_argument("chi-square test needs at least two pooled cells");
  double stat = 0.0;
  for (std::size_t i = 0; i < pe.size(); ++i) stat += (po[i] - pe[i]) * (po[i] - pe[i]) / pe[i];
  const boost::math::chi_squared dist(static_cast<double>(pe.size() - 1));
  return {stat, boost::math::cdf(boost::math::complement(dist, stat))};
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear_fit needs matching data of length >= 2");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("linear_fit needs distinct x values");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
  return fit;
}

bool noise_aware_nonincreasing(std::span<const double> values, std::span<const double> stderrs) {
  if (values.size() != stderrs.size()) throw std::invalid_argument("values and stderrs differ in length");
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    const double se = std::sqrt(stderrs[i] * stderrs[i] + stderrs[i + 1] * stderrs[i + 1]);
    if (!(values[i + 1] <= values[i] + 3.0 * se)) return false;
  }
  return true;
}

bool strictly_decreasing(std::span<const double> values) {
  for (std::size_t i = 0; i + 1 < values.size(); ++i)
    if (!(values[i + 1] < values[i])) return false;
  return true;
}

bool strictly_increasing(std::span<const double> values) {
  for (std::size_t i = 0; i + 1 < values.size(); ++i)
    if (!(values[i + 1] > values[i])) return false;
  return true;
}

}  // namespace zrp
