#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace pcsim {

/// splitmix64 step; also used to derive sub-seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for the k-th independent sub-stream of `master`. Documented scheme:
/// two splitmix64 steps over (master ^ (k+1) * odd-constant).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t k) {
  std::uint64_t s = master ^ ((k + 1) * 0xd1342543de82ef95ULL);
  splitmix64(s);
  return splitmix64(s);
}

/// Small deterministic PRNG. splitmix64-based so that streams are bit-stable
/// across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller (no cached second value, for stream
  /// reproducibility independent of call pattern).
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double gaussian(double sigma) { return sigma * gaussian(); }

 private:
  std::uint64_t state_;
};

}  // namespace pcsim
