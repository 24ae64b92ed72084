#include "zrp/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace zrp {

namespace {

// t - t^3 + 3t^5/5 - t^7/7, an antiderivative of (1 - t^2)^3.
double bump_primitive(double t) {
  const double t2 = t * t;
  return t * (1.0 - t2 * (1.0 - t2 * (0.6 - t2 / 7.0)));
}

Site first_site_at_or_above(double x, std::int64_t n) {
  const double v = std::ceil(x * static_cast<double>(n));
  return v < 1.0 ? 1 : static_cast<Site>(v);
}

}  // namespace

TestFunction::TestFunction(std::string id, double a, double b)
    : id_(std::move(id)), a_(a), b_(b), mid_(0.5 * (a + b)), half_(0.5 * (b - a)) {
  if (!(0.0 < a && a < b)) throw std::invalid_argument("test function support must satisfy 0 < a < b");
}

double TestFunction::value(double x) const {
  if (x <= a_ || x >= b_) return 0.0;
  const double s = (x - mid_) / half_;
  const double w = 1.0 - s * s;
  return w * w * w;
}

double TestFunction::gradient(double x) const {
  if (x <= a_ || x >= b_) return 0.0;
  const double s = (x - mid_) / half_;
  const double w = 1.0 - s * s;
  return -6.0 * s * w * w / half_;
}

double TestFunction::laplacian(double x) const {
  if (x <= a_ || x >= b_) return 0.0;
  const double s = (x - mid_) / half_;
  return (1.0 - s * s) * (30.0 * s * s - 6.0) / (half_ * half_);
}

double TestFunction::antiderivative(double x) const {
  if (x <= a_) return 0.0;
  const double s = std::min(1.0, (x - mid_) / half_);
  return half_ * (bump_primitive(s) - bump_primitive(-1.0));
}

double TestFunction::sup_gradient() const noexcept {
  const double s = 1.0 / std::sqrt(5.0);
  const double w = 1.0 - s * s;
  return 6.0 * s * w * w / half_;
}

double TestFunction::sup_laplacian() const noexcept { return 6.0 / (half_ * half_); }

double TestFunction::discrete_gradient(std::int64_t n, std::int64_t k) const {
  const double nd = static_cast<double>(n);
  return nd * (value(static_cast<double>(k + 1) / nd) - value(static_cast<double>(k) / nd));
}

double TestFunction::discrete_laplacian(std::int64_t n, std::int64_t k) const {
  const double nd = static_cast<double>(n);
  return nd * nd *
         (value(static_cast<double>(k + 1) / nd) + value(static_cast<double>(k - 1) / nd) -
          2.0 * value(static_cast<double>(k) / nd));
}

const std::vector<TestFunction>& basket() {
  static const std::vector<TestFunction> fns{
      TestFunction("g1", 0.2, 1.0), TestFunction("g2", 0.5, 2.0), TestFunction("g3", 1.0, 3.0)};
  return fns;
}

const TestFunction& test_function(std::string_view id) {
  for (const auto& g : basket())
    if (g.id() == id) return g;
  throw std::invalid_argument("unknown test function '" + std::string(id) + "' (expected g1, g2 or g3)");
}

double pair(const Configuration& eta, const EnergyModel& model, const TestFunction& g) {
  const double nd = static_cast<double>(model.n());
  const auto& occ = eta.occupancy();
  double sum = 0.0;
  for (auto it = occ.lower_bound(first_site_at_or_above(g.a(), model.n()));
       it != occ.end() && static_cast<double>(it->first) < g.b() * nd; ++it)
    sum += g.value(static_cast<double>(it->first) / nd) * static_cast<double>(it->second);
  return model.n_beta() / nd * sum;
}

ShapeFunction::ShapeFunction(const Configuration& eta, const EnergyModel& model)
    : n_(model.n()), scale_(model.n_beta() / static_cast<double>(model.n())), total_(eta.total()) {
  sites_.reserve(eta.occupied_sites());
  suffix_.reserve(eta.occupied_sites() + 1);
  for (const auto& [site, count] : eta) {
    sites_.push_back(site);
    suffix_.push_back(count);
  }
  suffix_.push_back(0);
  for (std::size_t i = sites_.size(); i-- > 0;) suffix_[i] += suffix_[i + 1];
}

Count ShapeFunction::suffix(Site k) const {
  const auto it = std::lower_bound(sites_.begin(), sites_.end(), k);
  return suffix_[static_cast<std::size_t>(it - sites_.begin())];
}

double ShapeFunction::operator()(double x) const {
  if (x <= 0.0) return mass();
  return scale_ * static_cast<double>(suffix(first_site_at_or_above(x, n_)));
}

double ShapeFunction::pair(const TestFunction& g) const {
  // psi_N equals scale * suffix(k) on the cell ((k-1)/N, k/N].
  const double nd = static_cast<double>(n_);
  const auto k_lo = first_site_at_or_above(g.a(), n_);
  const auto k_hi = first_site_at_or_above(g.b(), n_);
  double sum = 0.0;
  for (Site k = k_lo; k <= k_hi; ++k) {
    const double w = g.antiderivative(static_cast<double>(k) / nd) -
                     g.antiderivative(static_cast<double>(k - 1) / nd);
    if (w != 0.0) sum += w * static_cast<double>(suffix(k));
  }
  return scale_ * sum;
}

double shape_pair_by_parts(const Configuration& eta, const EnergyModel& model, const TestFunction& g) {
  const double nd = static_cast<double>(model.n());
  const auto& occ = eta.occupancy();
  double sum = 0.0;
  for (auto it = occ.lower_bound(first_site_at_or_above(g.a(), model.n())); it != occ.end(); ++it)
    sum += g.antiderivative(static_cast<double>(it->first) / nd) * static_cast<double>(it->second);
  return model.n_beta() / nd * sum;
}

Partition::Partition(std::vector<std::uint64_t> parts) : parts_(std::move(parts)) {
  for (std::size_t i = 0; i < parts_.size(); ++i) {
    if (parts_[i] == 0) throw std::invalid_argument("partition parts must be positive");
    if (i > 0 && parts_[i] > parts_[i - 1]) throw std::invalid_argument("partition parts must be nonincreasing");
    size_ += parts_[i];
  }
}

Configuration partition_to_config(const Partition& p) {
  Configuration eta;
  for (auto part : p.parts()) eta.add(part);
  return eta;
}

Partition config_to_partition(const Configuration& eta) {
  std::vector<std::uint64_t> parts;
  parts.reserve(eta.total());
  const auto& occ = eta.occupancy();
  for (auto it = occ.rbegin(); it != occ.rend(); ++it) parts.insert(parts.end(), it->second, it->first);
  return Partition(std::move(parts));
}

std::uint64_t partition_size(const Configuration& eta) {
  std::uint64_t m = 0;
  for (const auto& [site, count] : eta) m += site * count;
  return m;
}

double generator_coefficient(const EnergyModel& model, const TestFunction& g, std::int64_t k) {
  const std::int64_t n = model.n();
  const double nd = static_cast<double>(n);
  double d = g.discrete_laplacian(n, k) + nd * std::expm1(model.log_lambda(k)) * g.discrete_gradient(n, k);
  // Site 1 has no left jump.
  if (k == 1) d -= nd * nd * (g.value(0.0) - g.value(1.0 / nd));
  return d;
}

double generator_coefficient_bound(const EnergyModel& model, const TestFunction& g) {
  return 2.0 * (g.sup_laplacian() + (model.beta() + g.b()) / g.a() * g.sup_gradient());
}

std::vector<double> martingale_residual(const Trajectory& traj, const EnergyModel& model,
                                        const TestFunction& g, std::span<const double> times) {
  if (!traj.has_event_log) throw std::invalid_argument("martingale_residual needs a trajectory with an event log");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0 || times[i] > traj.t_end) throw std::invalid_argument("residual time outside the trajectory");
    if (i > 0 && times[i] < times[i - 1]) throw std::invalid_argument("residual times must be sorted");
  }
  const double nd = static_cast<double>(model.n());
  const double scale = model.n_beta() / nd;
  const double n2 = nd * nd;
  auto gk = [&](Site k) { return g.value(static_cast<double>(k) / nd); };
  // N^2 L <G, pi> from the generator directly, over the occupied sites near the support.
  auto drift = [&](const Configuration& eta) {
    double sum = 0.0;
    const auto& occ = eta.occupancy();
    const Site lo = first_site_at_or_above(g.a(), model.n());
    for (auto it = occ.lower_bound(lo > 1 ? lo - 1 : 1);
         it != occ.end() && static_cast<double>(it->first) <= g.b() * nd + 1.0; ++it) {
      const Site k = it->first;
      double r = model.lambda(static_cast<std::int64_t>(k)) * (gk(k + 1) - gk(k));
      if (k > 1) r += gk(k - 1) - gk(k);
      sum += r;
    }
    return scale * n2 * sum;
  };

  Configuration eta = traj.initial;
  const double p0 = pair(eta, model, g);
  double compensator = 0.0;
  double t = 0.0;
  std::size_t next = 0;
  std::vector<double> out;
  out.reserve(times.size());
  auto emit_until = [&](double t_next) {
    while (next < times.size() && times[next] < t_next) {
      const double ts = times[next++];
      out.push_back(pair(eta, model, g) - p0 - (compensator + drift(eta) * (ts - t)));
    }
  };
  for (const auto& ev : traj.events) {
    emit_until(ev.t_macro);
    compensator += drift(eta) * (ev.t_macro - t);
    t = ev.t_macro;
    eta.remove_one(ev.from);
    eta.add(ev.to);
  }
  emit_until(std::numeric_limits<double>::infinity());
  return out;
}

MartingaleTracker::MartingaleTracker(const EnergyModel& model, const TestFunction& g,
                                     const Configuration& initial)
    : scale_(model.n_beta() / static_cast<double>(model.n())), n_(model.n()), g_(&g) {
  const double nd = static_cast<double>(n_);
  const Site lo = first_site_at_or_above(g.a(), n_);
  k_lo_ = lo > 1 ? lo - 1 : 1;
  k_hi_ = first_site_at_or_above(g.b(), n_) + 1;
  coef_.resize(k_hi_ - k_lo_ + 1);
  occupied_.assign(coef_.size(), 0);
  for (Site k = k_lo_; k <= k_hi_; ++k)
    coef_[k - k_lo_] = scale_ * generator_coefficient(model, g, static_cast<std::int64_t>(k));
  for (const auto& [site, count] : initial) {
    if (site >= k_lo_ && site <= k_hi_) toggle(site, true);
    pairing_ += scale_ * g.value(static_cast<double>(site) / nd) * static_cast<double>(count);
  }
  pairing0_ = pairing_;
}

void MartingaleTracker::toggle(Site k, bool occupied) {
  char& o = occupied_[k - k_lo_];
  if (static_cast<bool>(o) == occupied) return;
  o = occupied ? 1 : 0;
  rate_ += occupied ? coef_[k - k_lo_] : -coef_[k - k_lo_];
}

void MartingaleTracker::advance(double dt_macro) { compensator_ += rate_ * dt_macro; }

void MartingaleTracker::moved(Site from, Site to, const ZrpSimulator& sim) {
  const double nd = static_cast<double>(n_);
  pairing_ += scale_ * (g_->value(static_cast<double>(to) / nd) - g_->value(static_cast<double>(from) / nd));
  for (Site k : {from, to})
    if (k >= k_lo_ && k <= k_hi_) toggle(k, sim.at(k) > 0);
}

void MartingaleTracker::mark(double t_macro) { marks_.emplace_back(t_macro, residual()); }

}  // namespace zrp
