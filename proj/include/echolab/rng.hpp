#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace echolab {

// splitmix64 finalizer; used to spread structured seeds before feeding them
// into the engine so that nearby (seed, index) pairs give unrelated streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic random source. std::mt19937_64 output is pinned by the
// standard, but std:: distributions are not, so all sampling is done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(mix64(seed)) {}

  // Independent stream for sample `index` of a dataset seeded with `seed`.
  // `lane` separates retries of the same sample.
  static Rng stream(std::uint64_t seed, std::uint64_t index, std::uint64_t lane = 0) {
    return Rng(mix64(seed + 0x632be59bd9b4e019ull) ^ mix64(index + 1) ^ mix64(lane + 0x100000001b3ull));
  }

  std::uint64_t bits() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range, rejection sampled (no modulo bias)
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t n = static_cast<std::uint64_t>(hi - lo) + 1;
    if (n == 0) return static_cast<std::int64_t>(eng_());  // full 64-bit range
    const std::uint64_t bound = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= bound);
    return lo + static_cast<std::int64_t>(x % n);
  }

  // standard normal, Box-Muller with pair caching
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace echolab
