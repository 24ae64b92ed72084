#pragma once

#include "zrp/energy_model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace zrp {

/// Block Lambda_{k,l} = {k-l, ..., k+l} holding j particles, optionally joined
/// to a second block around k2 by a long bond k+l <-> k2-l.
struct BlockSpec {
  std::int64_t k = 0;
  std::int64_t l = 0;
  std::int64_t j = 0;
  std::optional<std::int64_t> k2;
  /// c / c0 of the grand canonical measure behind the ratio bound.
  double c_frac = 0.5;
  std::size_t state_cap = 200000;

  bool two_block() const noexcept { return k2.has_value(); }
  /// 2l+1 or 4l+2.
  std::size_t width() const noexcept;
  /// Sites in increasing order.
  std::vector<std::int64_t> sites() const;
  /// Throws on k - l < 1, l < 1, j < 0 or overlapping blocks.
  void validate() const;
};

/// C(j + d - 1, d - 1); saturates at UINT64_MAX.
std::uint64_t composition_count(std::uint64_t d, std::uint64_t j);

/// All compositions of j into d nonnegative parts in lexicographic order,
/// stored row-major.
class StateSpace {
 public:
  StateSpace(std::size_t d, std::uint32_t j, std::size_t cap);

  std::size_t size() const noexcept { return count_; }
  std::size_t width() const noexcept { return d_; }
  std::uint32_t particles() const noexcept { return j_; }
  std::span<const std::uint32_t> operator[](std::size_t i) const {
    return {data_.data() + i * d_, d_};
  }
  /// Lexicographic rank of a composition of j into d parts.
  std::size_t index(std::span<const std::uint32_t> state) const;

 private:
  std::size_t d_;
  std::uint32_t j_;
  std::size_t count_;
  std::vector<std::uint32_t> data_;
};

StateSpace enumerate_states(const BlockSpec& spec);

struct Sandwich {
  std::size_t states = 0;
  double min_ratio = 1.0;
  double max_ratio = 1.0;
  double r_bound = 1.0;
  bool holds() const noexcept { return min_ratio >= 1.0 / r_bound && max_ratio <= r_bound; }
};

/// Closed-form r_{k,l,eps} (one block) or r_{k,k',l,eps} (two blocks, beta = 0 only).
double ratio_bound(const BlockSpec& spec, const EnergyModel& model);

/// Exact extremes of mu_{.,j}(eta) / nu_{.,j}(eta) over all states, with nu uniform.
Sandwich ratio_sandwich(const BlockSpec& spec, const EnergyModel& model);

/// Bond between state-space positions `left` and `right`: a particle moves
/// left -> right at rate `right_rate`, right -> left at rate 1.
struct Bond {
  std::size_t left;
  std::size_t right;
  double right_rate;
};

/// Localized chain on a fixed particle number. Immutable after assembly.
struct BlockChain {
  std::vector<std::int64_t> sites;
  std::vector<Bond> bonds;
  StateSpace states;
  Eigen::MatrixXd generator;
  /// Canonical weights of prod theta_x^{eta(x)}, normalized.
  Eigen::VectorXd stationary;

  /// max over rows of |sum of the row|.
  double max_row_sum() const;
  /// max relative |pi_a Q_ab - pi_b Q_ba| over entries.
  double detailed_balance_error() const;
};

/// The one- or two-block chain described by a BlockSpec: bonds x <-> x+1 with right rate lambda_x,
/// plus the long bond with right rate theta_{k2-l}/theta_{k+l}. The generator
/// is dense, so chains above kDenseGapCap states throw std::length_error.
BlockChain assemble_chain(const BlockSpec& spec, const EnergyModel& model);

/// Contiguous block of `width` sites starting at `first`, j particles.
BlockChain interval_chain(const EnergyModel& model, std::int64_t first, std::size_t width,
                          std::uint32_t j);

/// Largest state count handed to the dense eigensolver.
inline constexpr std::size_t kDenseGapCap = 6000;

/// Second smallest eigenvalue of -Q via the symmetrization D^{1/2} Q D^{-1/2}.
/// Throws std::runtime_error if reversibility fails (1e-12) or the state
/// space exceeds kDenseGapCap; returns 0 for a single state.
double spectral_gap(const BlockChain& chain);
double spectral_gap(const BlockSpec& spec, const EnergyModel& model);

/// Symmetrized -Q, used by spectral_gap.
Eigen::MatrixXd symmetrized_negative_generator(const BlockChain& chain);

}  // namespace zrp
