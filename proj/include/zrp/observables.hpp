#pragma once

#include "zrp/configuration.hpp"
#include "zrp/energy_model.hpp"
#include "zrp/simulator.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace zrp {

/// C^2 bump G(x) = (1 - s^2)^3 on [a, b], s = (2x - a - b)/(b - a), zero outside.
class TestFunction {
 public:
  TestFunction(std::string id, double a, double b);

  const std::string& id() const noexcept { return id_; }
  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }

  double value(double x) const;
  double gradient(double x) const;
  double laplacian(double x) const;
  /// g(x) = integral of G over [0, x].
  double antiderivative(double x) const;
  double integral() const { return antiderivative(b_); }

  double sup_value() const noexcept { return 1.0; }
  /// Attained at s = 1/sqrt5.
  double sup_gradient() const noexcept;
  /// Attained at s = 0.
  double sup_laplacian() const noexcept;

  /// N (G((k+1)/N) - G(k/N)).
  double discrete_gradient(std::int64_t n, std::int64_t k) const;
  /// N^2 (G((k+1)/N) + G((k-1)/N) - 2 G(k/N)).
  double discrete_laplacian(std::int64_t n, std::int64_t k) const;

 private:
  std::string id_;
  double a_, b_, mid_, half_;
};

/// g1 = [0.2, 1], g2 = [0.5, 2], g3 = [1, 3].
const std::vector<TestFunction>& basket();
const TestFunction& test_function(std::string_view id);

/// <G, pi^N> = (N_beta/N) sum_k G(k/N) eta(k).
double pair(const Configuration& eta, const EnergyModel& model, const TestFunction& g);

/// psi_N(x) = (N_beta/N) sum_{k >= ceil(xN)} eta(k), from cached suffix sums.
class ShapeFunction {
 public:
  ShapeFunction(const Configuration& eta, const EnergyModel& model);

  double operator()(double x) const;
  double mass() const noexcept { return scale_ * static_cast<double>(total_); }

  /// integral of G psi_N over (0, inf), cell by cell.
  double pair(const TestFunction& g) const;

 private:
  /// Particles on sites >= k.
  Count suffix(Site k) const;

  std::int64_t n_;
  double scale_;
  Count total_;
  std::vector<Site> sites_;
  std::vector<Count> suffix_;  // suffix_[i] = sum of counts at sites_[i..]
};

/// (N_beta/N) sum_k g(k/N) eta(k) with g the antiderivative of G; equals
/// ShapeFunction::pair by summation by parts.
double shape_pair_by_parts(const Configuration& eta, const EnergyModel& model, const TestFunction& g);

/// Integer partition p_1 >= p_2 >= ... >= 1.
class Partition {
 public:
  Partition() = default;
  /// Throws unless parts are positive and nonincreasing.
  explicit Partition(std::vector<std::uint64_t> parts);

  std::span<const std::uint64_t> parts() const noexcept { return parts_; }
  /// M = sum of parts.
  std::uint64_t size() const noexcept { return size_; }
  std::size_t length() const noexcept { return parts_.size(); }

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  std::vector<std::uint64_t> parts_;
  std::uint64_t size_ = 0;
};

/// xi(k) = #{m : p_m = k}.
Configuration partition_to_config(const Partition& p);
Partition config_to_partition(const Configuration& eta);
/// sum_k k eta(k), the size of the associated partition.
std::uint64_t partition_size(const Configuration& eta);

/// D_{N,k} = Delta_N G(k/N) + N (lambda_k - 1) nabla_N G(k/N).
double generator_coefficient(const EnergyModel& model, const TestFunction& g, std::int64_t k);
/// 2 (||Delta G|| + ((beta + b)/a) ||nabla G||).
double generator_coefficient_bound(const EnergyModel& model, const TestFunction& g);

/// R(t) = <G, pi_t> - <G, pi_0> - int_0^t N^2 L <G, pi_s> ds at each time,
/// replaying the trajectory's event log. Throws without an event log or for
/// times past the end of the trajectory.
std::vector<double> martingale_residual(const Trajectory& traj, const EnergyModel& model,
                                        const TestFunction& g, std::span<const double> times);

/// Online counterpart of martingale_residual for runs too long to log: keeps
/// the pairing and the compensator rate up to date per event.
class MartingaleTracker final : public SimObserver {
 public:
  MartingaleTracker(const EnergyModel& model, const TestFunction& g, const Configuration& initial);

  void advance(double dt_macro) override;
  void moved(Site from, Site to, const ZrpSimulator& sim) override;
  void mark(double t_macro) override;

  double residual() const noexcept { return pairing_ - pairing0_ - compensator_; }
  double pairing() const noexcept { return pairing_; }
  /// (t, R(t)) at every mark.
  const std::vector<std::pair<double, double>>& marks() const noexcept { return marks_; }

 private:
  void toggle(Site k, bool occupied);

  double scale_;
  std::int64_t n_;
  const TestFunction* g_;
  Site k_lo_, k_hi_;
  std::vector<double> coef_;     // coefficient of site k_lo_ + i
  std::vector<char> occupied_;
  double rate_ = 0.0;
  double pairing0_ = 0.0;
  double pairing_ = 0.0;
  double compensator_ = 0.0;
  std::vector<std::pair<double, double>> marks_;
};

}  // namespace zrp
