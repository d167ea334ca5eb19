#pragma once

#include <cstdint>
#include <cmath>
#include <limits>

namespace topoguard {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Derives an independent seed for a named sub-stream so that components
// driven by one user seed never share random draws.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ull));
}

inline constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Counter-based uniform in [0,1): the value at `index` does not depend on
// the order in which indices are visited.
inline constexpr double counter_uniform(std::uint64_t seed, std::uint64_t index) noexcept {
  return to_unit(splitmix64(splitmix64(seed) ^ splitmix64(index + 0xD1B54A32D192ED03ull)));
}

// xoshiro256** seeded through splitmix64. Portable and bit-reproducible,
// unlike the std distributions whose outputs vary between standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept {
    std::uint64_t x = seed;
    for (auto& s : state_) {
      x += 0x9E3779B97F4A7C15ull;
      s = splitmix64(x);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  double uniform() noexcept { return to_unit((*this)()); }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t index(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t r;
    do {
      r = (*this)();
    } while (r >= limit);
    return r % n;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

// Laplace(0, scale) by inverse CDF of a uniform in [0,1).
inline double laplace_from_uniform(double u, double scale) noexcept {
  // Exact on the 2^-53 grid of to_unit: a symmetric grid strictly inside
  // (-0.5, 0.5).
  const double centered = (u - 0.5) + 0x1.0p-54;
  const double mag = std::log1p(-2.0 * std::fabs(centered));
  return centered < 0 ? scale * mag : -scale * mag;
}

}  // namespace topoguard
