#pragma once

#include <cstdint>
#include <map>
#include <utility>

namespace zrp {

using Site = std::uint64_t;
using Count = std::uint64_t;

/// Sparse occupancy eta : site -> count on sites 1, 2, ... with the exact
/// particle total kept alongside. Zero counts are never stored.
class Configuration {
 public:
  using Map = std::map<Site, Count>;

  Configuration() = default;
  /// Drops zero entries; throws on site 0.
  explicit Configuration(const Map& occupancy);

  Count at(Site site) const {
    auto it = occupancy_.find(site);
    return it == occupancy_.end() ? 0 : it->second;
  }
  void set(Site site, Count count);
  void add(Site site, Count count = 1);
  /// Removes one particle; throws if the site is empty.
  void remove_one(Site site);

  Count total() const noexcept { return total_; }
  bool empty() const noexcept { return total_ == 0; }
  Site max_site() const noexcept { return occupancy_.empty() ? 0 : occupancy_.rbegin()->first; }
  std::size_t occupied_sites() const noexcept { return occupancy_.size(); }
  const Map& occupancy() const noexcept { return occupancy_; }

  Map::const_iterator begin() const { return occupancy_.begin(); }
  Map::const_iterator end() const { return occupancy_.end(); }

  /// Coordinatewise eta <= other.
  bool dominated_by(const Configuration& other) const;

  /// Recomputes the total from the map and compares.
  bool consistent() const;

  friend bool operator==(const Configuration& a, const Configuration& b) {
    return a.total_ == b.total_ && a.occupancy_ == b.occupancy_;
  }

 private:
  Map occupancy_;
  Count total_ = 0;
};

}  // namespace zrp
