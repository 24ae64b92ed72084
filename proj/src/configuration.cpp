#include "zrp/configuration.hpp"

#include <stdexcept>

namespace zrp {

Configuration::Configuration(const Map& occupancy) {
  for (const auto& [site, count] : occupancy) set(site, count);
}

void Configuration::set(Site site, Count count) {
  if (site == 0) throw std::invalid_argument("sites are numbered from 1");
  auto it = occupancy_.find(site);
  const Count old = it == occupancy_.end() ? 0 : it->second;
  total_ = total_ - old + count;
  if (count == 0) {
    if (it != occupancy_.end()) occupancy_.erase(it);
  } else if (it == occupancy_.end()) {
    occupancy_.emplace(site, count);
  } else {
    it->second = count;
  }
}

void Configuration::add(Site site, Count count) {
  if (count == 0) return;
  if (site == 0) throw std::invalid_argument("sites are numbered from 1");
  occupancy_[site] += count;
  total_ += count;
}

void Configuration::remove_one(Site site) {
  auto it = occupancy_.find(site);
  if (it == occupancy_.end()) throw std::invalid_argument("remove_one on an empty site");
  if (--it->second == 0) occupancy_.erase(it);
  --total_;
}

bool Configuration::dominated_by(const Configuration& other) const {
  for (const auto& [site, count] : occupancy_)
    if (count > other.at(site)) return false;
  return true;
}

bool Configuration::consistent() const {
  Count sum = 0;
  for (const auto& [site, count] : occupancy_) {
    if (count == 0 || site == 0) return false;
    sum += count;
  }
  return sum == total_;
}

}  // namespace zrp
