#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace zrp {

/// Welford accumulator. Merging is exact in the counts and deterministic
/// when performed in a fixed order.
class RunningStats {
 public:
  void add(double x) noexcept;
  void merge(const RunningStats& other) noexcept;

  std::uint64_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  /// Unbiased sample variance; NaN below two samples.
  double variance() const noexcept;
  /// Standard error of the mean; NaN below two samples.
  double stderr_mean() const noexcept;

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Kolmogorov limit distribution P(K > x) = 2 sum (-1)^{k-1} e^{-2 k^2 x^2}.
double kolmogorov_survival(double x);

/// Two-sample Kolmogorov-Smirnov with the asymptotic p-value at the
/// effective size n m / (n + m) (with the Stephens small-sample correction).
TestResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// One-sample Kolmogorov-Smirnov against a continuous cdf.
TestResult ks_one_sample(std::span<const double> sample, const std::function<double(double)>& cdf);

/// Pearson chi-square goodness of fit; cells with expected count below 5 are
/// pooled into their right neighbour. `expected` holds probabilities that
/// sum to at most 1; the remainder forms a final cell.
TestResult chi_square_gof(std::span<const std::uint64_t> observed, std::span<const double> expected);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = intercept + slope x.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

/// values[i+1] <= values[i] + 3 sqrt(se_i^2 + se_{i+1}^2) for all i, so a
/// step up must be statistically significant to count as a violation.
bool noise_aware_nonincreasing(std::span<const double> values, std::span<const double> stderrs);
bool strictly_decreasing(std::span<const double> values);
bool strictly_increasing(std::span<const double> values);

}  // namespace zrp
