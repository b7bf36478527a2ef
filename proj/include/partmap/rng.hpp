#pragma once

// Counter-based random number generation. Every draw is a pure function of
// (seed, stream, counter), so results are identical across platforms and
// independent of call interleaving between streams.

#include <cmath>
#include <cstdint>

namespace partmap {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

} // namespace detail

class Rng {
public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(detail::mix64(seed ^ (0x6a09e667f3bcc909ull + stream * 0x9e3779b97f4a7c15ull))) {}

  // Derive an independent stream without disturbing this one.
  Rng fork(std::uint64_t stream) const {
    return Rng(detail::mix64(key_ ^ ((stream + 1) * 0xda942042e4dd58b5ull)));
  }

  std::uint64_t next_u64() { return detail::mix64(key_ + (++counter_) * 0xd1342543de82ef95ull); }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free 128-bit multiply; bias is negligible for n << 2^64 but
    // we reject the short tail to keep draws exact.
    for (;;) {
      std::uint64_t x = next_u64();
      __uint128_t m = static_cast<__uint128_t>(x) * n;
      std::uint64_t lo = static_cast<std::uint64_t>(m);
      if (lo >= n || lo >= (0ull - n) % n) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  int index(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

  // Standard normal via Box-Muller (no libm distribution, keeps bit-stability).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

} // namespace partmap
