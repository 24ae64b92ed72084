#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace zrp {

/// splitmix64 finalizer; used to turn structured seed material into
/// well-mixed 64-bit seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of replica `replica` of experiment `experiment_id` at scale `n`.
/// Pure function of its arguments, so a run is reproducible from
/// (config, base seed) regardless of scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view experiment_id,
                                    std::uint64_t n, std::uint64_t replica) noexcept {
  std::uint64_t h = mix64(base_seed);
  h = mix64(h ^ fnv1a(experiment_id));
  h = mix64(h ^ n);
  h = mix64(h ^ replica);
  return h;
}

/// 64-bit Mersenne twister with distribution helpers that do not depend on
/// the standard library's (implementation-defined) distribution algorithms.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on (0, 1]; never returns 0 so log(u) is finite.
  double uniform_pos() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Exponential with the given rate (rate > 0).
  double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace zrp
