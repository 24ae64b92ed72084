#include "zrp/block_analysis.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace zrp {

std::size_t BlockSpec::width() const noexcept {
  const auto w = static_cast<std::size_t>(2 * l + 1);
  return two_block() ? 2 * w : w;
}

void BlockSpec::validate() const {
  if (l < 1) throw std::invalid_argument("block half-width l must be >= 1");
  if (j < 0) throw std::invalid_argument("particle number j must be >= 0");
  if (k - l < 1) throw std::invalid_argument("block requires k - l >= 1");
  if (k2 && std::abs(*k2 - k) <= 2 * l) throw std::invalid_argument("two blocks require |k' - k| > 2l");
  if (k2 && *k2 < k) throw std::invalid_argument("two blocks require k < k'");
  if (!(c_frac > 0.0 && c_frac < 1.0)) throw std::invalid_argument("c_frac must lie in (0, 1)");
}

std::vector<std::int64_t> BlockSpec::sites() const {
  std::vector<std::int64_t> s;
  for (std::int64_t x = k - l; x <= k + l; ++x) s.push_back(x);
  if (k2)
    for (std::int64_t x = *k2 - l; x <= *k2 + l; ++x) s.push_back(x);
  return s;
}

std::uint64_t composition_count(std::uint64_t d, std::uint64_t j) {
  if (d == 0) return j == 0 ? 1 : 0;
  // C(j + d - 1, min(j, d - 1)) by the multiplicative formula; each partial
  // product is an exact binomial. Saturates once a product would overflow.
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t n = j + d - 1;
  const std::uint64_t r = std::min(j, d - 1);
  std::uint64_t c = 1;
  for (std::uint64_t i = 1; i <= r; ++i) {
    const std::uint64_t factor = n - r + i;
    if (c > kMax / factor) return kMax;
    c = c * factor / i;
  }
  return c;
}

StateSpace::StateSpace(std::size_t d, std::uint32_t j, std::size_t cap) : d_(d), j_(j) {
  if (d == 0) throw std::invalid_argument("state space needs at least one site");
  const std::uint64_t count = composition_count(d, j);
  if (count > cap)
    throw std::length_error("state count " + std::to_string(count) + " exceeds the enumeration cap " +
                            std::to_string(cap));
  count_ = static_cast<std::size_t>(count);
  data_.reserve(count_ * d_);
  std::vector<std::uint32_t> cur(d_, 0);
  // Depth-first over the first coordinate ascending gives lexicographic order.
  auto fill = [&](auto&& self, std::size_t pos, std::uint32_t rem) -> void {
    if (pos + 1 == d_) {
      cur[pos] = rem;
      data_.insert(data_.end(), cur.begin(), cur.end());
      return;
    }
    for (std::uint32_t v = 0; v <= rem; ++v) {
      cur[pos] = v;
      self(self, pos + 1, rem - v);
    }
  };
  fill(fill, 0, j_);
}

std::size_t StateSpace::index(std::span<const std::uint32_t> state) const {
  if (state.size() != d_) throw std::invalid_argument("state has the wrong width");
  std::size_t rank = 0;
  std::uint32_t rem = j_;
  for (std::size_t i = 0; i + 1 < d_; ++i) {
    if (state[i] > rem) throw std::invalid_argument("state has the wrong particle number");
    for (std::uint32_t v = 0; v < state[i]; ++v)
      rank += static_cast<std::size_t>(composition_count(d_ - i - 1, rem - v));
    rem -= state[i];
  }
  if (state[d_ - 1] != rem) throw std::invalid_argument("state has the wrong particle number");
  return rank;
}

StateSpace enumerate_states(const BlockSpec& spec) {
  spec.validate();
  return StateSpace(spec.width(), static_cast<std::uint32_t>(spec.j), spec.state_cap);
}

double ratio_bound(const BlockSpec& spec, const EnergyModel& model) {
  spec.validate();
  const double c = spec.c_frac * model.c0();
  const double nd = static_cast<double>(model.n());
  const auto jd = static_cast<double>(spec.j);
  const auto ld = static_cast<double>(spec.l);
  const std::int64_t k = spec.k, l = spec.l;
  if (!spec.two_block()) {
    // E nondecreasing: argmax at k + l, argmin at k - l.
    const double e_max = model.energy(k + l);
    const double e_min = model.energy(k - l);
    const double b = model.beta();
    const double num = std::log1p(-c * std::exp(-b * e_max - static_cast<double>(k + l) / nd));
    const double den = std::log1p(-c * std::exp(-b * e_min - static_cast<double>(k - l) / nd));
    return std::exp((2.0 * ld + 1.0) * (num - den) + jd * (b * (e_max - e_min) + 2.0 * ld / nd));
  }
  if (model.tag() != Regime::Beta0) throw std::domain_error("the two-block bound is stated for beta = 0 only");
  const std::int64_t k2 = *spec.k2;
  const double num = std::log1p(-c * std::exp(-static_cast<double>(k2 + l) / nd));
  const double den = std::log1p(-c * std::exp(-static_cast<double>(k - l) / nd));
  return std::exp((4.0 * ld + 2.0) * (num - den) + jd * (2.0 * ld + static_cast<double>(k2 - k)) / nd);
}

namespace {

// log of prod theta_x^{eta(x)} for every state.
std::vector<double> log_weights(const StateSpace& states, std::span<const std::int64_t> sites,
                                const EnergyModel& model) {
  std::vector<double> lt(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) lt[i] = model.log_theta(sites[i]);
  std::vector<double> lw(states.size());
  for (std::size_t s = 0; s < states.size(); ++s) {
    const auto eta = states[s];
    double v = 0.0;
    for (std::size_t i = 0; i < sites.size(); ++i) v += static_cast<double>(eta[i]) * lt[i];
    lw[s] = v;
  }
  return lw;
}

BlockChain build(const EnergyModel& model, std::vector<std::int64_t> sites, std::vector<Bond> bonds,
                 StateSpace states) {
  const std::size_t n = states.size();
  if (n > kDenseGapCap)
    throw std::length_error("state count " + std::to_string(n) + " is too large for a dense generator");
  BlockChain chain{std::move(sites), std::move(bonds), std::move(states), Eigen::MatrixXd::Zero(n, n),
                   Eigen::VectorXd(n)};
  std::vector<std::uint32_t> next(chain.states.width());
  for (std::size_t a = 0; a < n; ++a) {
    const auto eta = chain.states[a];
    double out = 0.0;
    for (const Bond& bond : chain.bonds) {
      for (int dir = 0; dir < 2; ++dir) {
        const std::size_t from = dir == 0 ? bond.left : bond.right;
        const std::size_t to = dir == 0 ? bond.right : bond.left;
        if (eta[from] == 0) continue;
        std::copy(eta.begin(), eta.end(), next.begin());
        --next[from];
        ++next[to];
        const double rate = dir == 0 ? bond.right_rate : 1.0;
        chain.generator(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(chain.states.index(next))) += rate;
        out += rate;
      }
    }
    chain.generator(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) = -out;
  }
  const auto lw = log_weights(chain.states, chain.sites, model);
  const double top = *std::max_element(lw.begin(), lw.end());
  double z = 0.0;
  for (std::size_t s = 0; s < n; ++s) z += std::exp(lw[s] - top);
  for (std::size_t s = 0; s < n; ++s) chain.stationary(static_cast<Eigen::Index>(s)) = std::exp(lw[s] - top) / z;
  return chain;
}

std::vector<Bond> nearest_neighbour_bonds(const EnergyModel& model, std::span<const std::int64_t> sites,
                                          std::size_t first, std::size_t last) {
  std::vector<Bond> bonds;
  for (std::size_t i = first; i + 1 < last; ++i) bonds.push_back({i, i + 1, model.lambda(sites[i])});
  return bonds;
}

}  // namespace

Sandwich ratio_sandwich(const BlockSpec& spec, const EnergyModel& model) {
  const StateSpace states = enumerate_states(spec);
  const auto sites = spec.sites();
  const auto lw = log_weights(states, sites, model);
  const double top = *std::max_element(lw.begin(), lw.end());
  double z = 0.0;
  for (double v : lw) z += std::exp(v - top);
  // mu(eta) / nu(eta) = |Omega| w(eta) / Z
  const double log_scale = std::log(static_cast<double>(states.size())) - std::log(z) - top;
  Sandwich s;
  s.states = states.size();
  s.min_ratio = std::numeric_limits<double>::infinity();
  s.max_ratio = 0.0;
  for (double v : lw) {
    const double r = std::exp(v + log_scale);
    s.min_ratio = std::min(s.min_ratio, r);
    s.max_ratio = std::max(s.max_ratio, r);
  }
  s.r_bound = ratio_bound(spec, model);
  return s;
}

double BlockChain::max_row_sum() const {
  double worst = 0.0;
  for (Eigen::Index a = 0; a < generator.rows(); ++a) worst = std::max(worst, std::abs(generator.row(a).sum()));
  return worst;
}

double BlockChain::detailed_balance_error() const {
  double worst = 0.0;
  const Eigen::Index n = generator.rows();
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const double fwd = stationary(a) * generator(a, b);
      const double bwd = stationary(b) * generator(b, a);
      const double scale = std::max(fwd, bwd);
      if (scale > 0.0) worst = std::max(worst, std::abs(fwd - bwd) / scale);
    }
  return worst;
}

BlockChain assemble_chain(const BlockSpec& spec, const EnergyModel& model) {
  StateSpace states = enumerate_states(spec);
  auto sites = spec.sites();
  const std::size_t w = static_cast<std::size_t>(2 * spec.l + 1);
  auto bonds = nearest_neighbour_bonds(model, sites, 0, w);
  if (spec.two_block()) {
    auto second = nearest_neighbour_bonds(model, sites, w, 2 * w);
    bonds.insert(bonds.end(), second.begin(), second.end());
    const double rate = std::exp(model.log_theta(*spec.k2 - spec.l) - model.log_theta(spec.k + spec.l));
    bonds.push_back({w - 1, w, rate});
  }
  return build(model, std::move(sites), std::move(bonds), std::move(states));
}

BlockChain interval_chain(const EnergyModel& model, std::int64_t first, std::size_t width, std::uint32_t j) {
  if (first < 1) throw std::invalid_argument("interval must start at a site >= 1");
  std::vector<std::int64_t> sites(width);
  for (std::size_t i = 0; i < width; ++i) sites[i] = first + static_cast<std::int64_t>(i);
  auto bonds = nearest_neighbour_bonds(model, sites, 0, width);
  return build(model, std::move(sites), std::move(bonds), StateSpace(width, j, 200000));
}

Eigen::MatrixXd symmetrized_negative_generator(const BlockChain& chain) {
  const Eigen::VectorXd root = chain.stationary.array().sqrt();
  const Eigen::VectorXd inv_root = root.cwiseInverse();
  Eigen::MatrixXd s = -(root.asDiagonal() * chain.generator * inv_root.asDiagonal());
  return 0.5 * (s + s.transpose());
}

double spectral_gap(const BlockChain& chain) {
  const std::size_t n = chain.states.size();
  if (n <= 1) return 0.0;
  if (n > kDenseGapCap)
    throw std::runtime_error("state count " + std::to_string(n) + " exceeds the dense eigensolve cap");
  if (chain.detailed_balance_error() > 1e-12) throw std::runtime_error("block chain is not reversible");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetrized_negative_generator(chain),
                                                        Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolve failed");
  return solver.eigenvalues()(1);
}

double spectral_gap(const BlockSpec& spec, const EnergyModel& model) {
  spec.validate();
  const auto count = composition_count(spec.width(), static_cast<std::uint64_t>(spec.j));
  if (count > kDenseGapCap)
    throw std::runtime_error("state count " + std::to_string(count) + " exceeds the dense eigensolve cap");
  return spectral_gap(assemble_chain(spec, model));
}

}  // namespace zrp
